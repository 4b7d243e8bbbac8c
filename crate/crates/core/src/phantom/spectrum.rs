use crate::fft;
use crate::field::ScalarField2D;

/// Magnitude of the centred 2D spectrum along its middle row (zero vertical
/// frequency). Index `W/2` holds the DC term.
pub fn spectral_profile(image: &ScalarField2D) -> Vec<f64> {
    let (h, w) = image.shape();
    let spec = fft::forward_real(image.data(), h, w);
    // Row 0 of the uncentred spectrum is the zero-vertical-frequency row;
    // shift it so DC lands in the middle.
    (0..w).map(|i| spec[(i + w - w / 2) % w].norm()).collect()
}

/// Location and height of a harmonic peak relative to the central peak.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HarmonicPeak {
    /// Distance from the centre in frequency bins.
    pub offset_bins: usize,
    pub magnitude: f64,
    pub central: f64,
}

impl HarmonicPeak {
    pub fn ratio(&self) -> f64 {
        self.magnitude / self.central
    }
}

/// Strongest bin on the positive-frequency side at least `min_offset` bins
/// from the centre.
pub fn harmonic_peak(profile: &[f64], min_offset: usize) -> Option<HarmonicPeak> {
    let c = profile.len() / 2;
    let (offset, magnitude) = profile
        .iter()
        .enumerate()
        .skip(c + min_offset.max(1))
        .map(|(i, &m)| (i - c, m))
        .max_by(|a, b| a.1.total_cmp(&b.1))?;
    Some(HarmonicPeak {
        offset_bins: offset,
        magnitude,
        central: profile[c],
    })
}
