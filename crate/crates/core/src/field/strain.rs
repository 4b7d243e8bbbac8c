use super::{ScalarField2D, VectorField2D};

/// Central differences in the interior, one-sided at the borders.
/// Returns `(∂/∂x, ∂/∂y)` per pixel, in units per pixel.
pub fn spatial_gradient(data: &[f64], height: usize, width: usize) -> (Vec<f64>, Vec<f64>) {
    let (h, w) = (height, width);
    let mut gx = vec![0.0; h * w];
    let mut gy = vec![0.0; h * w];
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            gx[i] = if x == 0 {
                data[i + 1] - data[i]
            } else if x == w - 1 {
                data[i] - data[i - 1]
            } else {
                0.5 * (data[i + 1] - data[i - 1])
            };
            gy[i] = if y == 0 {
                data[i + w] - data[i]
            } else if y == h - 1 {
                data[i] - data[i - w]
            } else {
                0.5 * (data[i + w] - data[i - w])
            };
        }
    }
    (gx, gy)
}

/// Displacement gradient in physical units, `[[∂ux/∂X, ∂ux/∂Y], [∂uy/∂X, ∂uy/∂Y]]`.
fn displacement_gradient(disp: &VectorField2D) -> Vec<[[f64; 2]; 2]> {
    let (h, w) = disp.shape();
    let (sx, sy) = disp.spacing_mm();
    let (dxx, dxy) = spatial_gradient(disp.dx(), h, w);
    let (dyx, dyy) = spatial_gradient(disp.dy(), h, w);
    (0..h * w)
        .map(|i| [[dxx[i], dxy[i] * sx / sy], [dyx[i] * sy / sx, dyy[i]]])
        .collect()
}

/// `det(I + ∇d)` per pixel.
pub fn jacobian_determinant(disp: &VectorField2D) -> ScalarField2D {
    let (h, w) = disp.shape();
    let data = displacement_gradient(disp)
        .into_iter()
        .map(|g| (1.0 + g[0][0]) * (1.0 + g[1][1]) - g[0][1] * g[1][0])
        .collect();
    ScalarField2D::new(h, w, data, disp.spacing_mm()).expect("gradient of finite field is finite")
}

/// Largest eigenvalue of the Green–Lagrange strain `E = ½(FᵀF − I)`, `F = I + ∇d`.
pub fn max_principal_strain(disp: &VectorField2D) -> ScalarField2D {
    let (h, w) = disp.shape();
    let data = displacement_gradient(disp)
        .into_iter()
        .map(|g| {
            let (f11, f12, f21, f22) = (1.0 + g[0][0], g[0][1], g[1][0], 1.0 + g[1][1]);
            // FᵀF
            let c11 = f11 * f11 + f21 * f21;
            let c22 = f12 * f12 + f22 * f22;
            let c12 = f11 * f12 + f21 * f22;
            let e11 = 0.5 * (c11 - 1.0);
            let e22 = 0.5 * (c22 - 1.0);
            let e12 = 0.5 * c12;
            let mid = 0.5 * (e11 + e22);
            let rad = (0.5 * (e11 - e22)).hypot(e12);
            mid + rad
        })
        .collect();
    ScalarField2D::new(h, w, data, disp.spacing_mm()).expect("strain of finite field is finite")
}
