use super::{Op, Tape, Var};
use crate::error::{Error, Result};
use crate::field::interp_cell as cell;

/// Bilinear weights and the derivative switches of one sample.
struct Stencil {
    base: usize,
    fx: f64,
    fy: f64,
    /// Coordinate was strictly inside the grid along each axis (derivative
    /// passes through the clamp).
    live_x: bool,
    live_y: bool,
}

fn stencil(x: f64, y: f64, h: usize, w: usize) -> Stencil {
    let (x0, fx) = cell(x, w);
    let (y0, fy) = cell(y, h);
    Stencil {
        base: y0 * w + x0,
        fx,
        fy,
        live_x: (0.0..=(w - 1) as f64).contains(&x),
        live_y: (0.0..=(h - 1) as f64).contains(&y),
    }
}

impl Tape {
    /// Samples a `H×W` image at `N×2` pixel coordinates (`[:, 0] = x`,
    /// `[:, 1] = y`) with bilinear interpolation and border clamping.
    /// Gradients flow into both the image and the coordinates.
    pub fn grid_sample(&mut self, image: Var, coords: Var) -> Result<Var> {
        let (ishape, cshape) = (self.shape(image), self.shape(coords));
        if ishape.len() != 2 || ishape[0] < 2 || ishape[1] < 2 {
            return Err(Error::shape("H×W image with H, W >= 2", format!("{ishape:?}")));
        }
        if cshape.len() != 2 || cshape[1] != 2 {
            return Err(Error::shape("N×2 coordinates", format!("{cshape:?}")));
        }
        let (h, w) = (ishape[0], ishape[1]);
        let n = cshape[0];
        let img = self.value(image);
        let c = self.value(coords);
        if let Some(i) = c.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "sampling coordinate {} is not finite",
                i / 2
            )));
        }
        let mut out = Vec::with_capacity(n);
        for p in c.chunks_exact(2) {
            let s = stencil(p[0], p[1], h, w);
            let b = s.base;
            let top = (1.0 - s.fx) * img[b] + s.fx * img[b + 1];
            let bottom = (1.0 - s.fx) * img[b + w] + s.fx * img[b + w + 1];
            out.push((1.0 - s.fy) * top + s.fy * bottom);
        }
        let rg = self.requires_grad(image) || self.requires_grad(coords);
        self.push(vec![n], out, rg, Op::GridSample { image, coords })
    }

    pub(super) fn propagate_grid_sample(&mut self, image: Var, coords: Var, g: &[f64]) {
        let (h, w) = (self.shape(image)[0], self.shape(image)[1]);
        if self.requires_grad(image) {
            self.accumulate(image, |t, gi| {
                let c = t.value(coords);
                for (p, &gn) in c.chunks_exact(2).zip(g) {
                    let s = stencil(p[0], p[1], h, w);
                    let b = s.base;
                    gi[b] += gn * (1.0 - s.fx) * (1.0 - s.fy);
                    gi[b + 1] += gn * s.fx * (1.0 - s.fy);
                    gi[b + w] += gn * (1.0 - s.fx) * s.fy;
                    gi[b + w + 1] += gn * s.fx * s.fy;
                }
            });
        }
        if self.requires_grad(coords) {
            self.accumulate(coords, |t, gc| {
                let (c, img) = (t.value(coords), t.value(image));
                for ((p, &gn), d) in c.chunks_exact(2).zip(g).zip(gc.chunks_exact_mut(2)) {
                    let s = stencil(p[0], p[1], h, w);
                    let b = s.base;
                    let (i00, i01, i10, i11) = (img[b], img[b + 1], img[b + w], img[b + w + 1]);
                    if s.live_x {
                        d[0] += gn * ((1.0 - s.fy) * (i01 - i00) + s.fy * (i11 - i10));
                    }
                    if s.live_y {
                        d[1] += gn * ((1.0 - s.fx) * (i10 - i00) + s.fx * (i11 - i01));
                    }
                }
            });
        }
    }
}
