//! Biquad sections for the MFCC pre-filter.

use core::f64::consts::PI;

/// Direct-form-I biquad, coefficients normalized so a0 == 1.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Biquad {
    b0: f64,
    b1: f64,
    b2: f64,
    a1: f64,
    a2: f64,
}

impl Biquad {
    /// Second-order high-pass from the bilinear transform with the given Q.
    pub fn high_pass(cutoff_hz: f64, q: f64, sample_rate: f64) -> Self {
        let w0 = 2.0 * PI * cutoff_hz / sample_rate;
        let (sin, cos) = (libm::sin(w0), libm::cos(w0));
        let alpha = sin / (2.0 * q);
        let a0 = 1.0 + alpha;
        Self {
            b0: (1.0 + cos) / 2.0 / a0,
            b1: -(1.0 + cos) / a0,
            b2: (1.0 + cos) / 2.0 / a0,
            a1: -2.0 * cos / a0,
            a2: (1.0 - alpha) / a0,
        }
    }

    pub fn process(&self, x: &mut [f64]) {
        let (mut x1, mut x2, mut y1, mut y2) = (0.0, 0.0, 0.0, 0.0);
        for s in x.iter_mut() {
            let x0 = *s;
            let y0 = self.b0 * x0 + self.b1 * x1 + self.b2 * x2 - self.a1 * y1 - self.a2 * y2;
            x2 = x1;
            x1 = x0;
            y2 = y1;
            y1 = y0;
            *s = y0;
        }
    }

    /// |H(e^{jw})| at frequency `f`.
    pub fn magnitude(&self, f: f64, sample_rate: f64) -> f64 {
        let w = 2.0 * PI * f / sample_rate;
        let (c1, s1, c2, s2) = (libm::cos(w), libm::sin(w), libm::cos(2.0 * w), libm::sin(2.0 * w));
        let nr = self.b0 + self.b1 * c1 + self.b2 * c2;
        let ni = -(self.b1 * s1 + self.b2 * s2);
        let dr = 1.0 + self.a1 * c1 + self.a2 * c2;
        let di = -(self.a1 * s1 + self.a2 * s2);
        libm::sqrt((nr * nr + ni * ni) / (dr * dr + di * di))
    }
}

/// 4th-order Butterworth high-pass as two cascaded biquads.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BandPass {
    sections: [Biquad; 2],
}

impl BandPass {
    /// Pass band `[low_hz, high_hz]`. The upper edge only matters below Nyquist;
    /// at 16 kHz with an 8 kHz edge it is a no-op and only the high-pass acts.
    pub fn new(low_hz: f64, high_hz: f64, sample_rate: f64) -> Self {
        debug_assert!(high_hz >= sample_rate / 2.0, "low-pass stage not implemented");
        // Butterworth pole-pair Qs for order 4.
        let qs = [0.541_196_100_146_197, 1.306_562_964_876_376_6];
        Self {
            sections: qs.map(|q| Biquad::high_pass(low_hz, q, sample_rate)),
        }
    }

    pub fn process(&self, x: &mut [f64]) {
        self.sections.iter().for_each(|s| s.process(x));
    }

    pub fn magnitude(&self, f: f64, sample_rate: f64) -> f64 {
        self.sections.iter().map(|s| s.magnitude(f, sample_rate)).product()
    }
}
