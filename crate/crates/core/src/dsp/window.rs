use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::fft::FftPair;

/// Frequency-domain taper applied across the active tones. Serialized in
/// its text form, e.g. `"chebyshev:80"`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(try_from = "String", into = "String")]
pub enum WindowSpec {
    #[default]
    Rectangular,
    Chebyshev {
        sidelobe_db: f64,
    },
}

impl WindowSpec {
    pub fn chebyshev(sidelobe_db: f64) -> Self {
        WindowSpec::Chebyshev { sidelobe_db }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            WindowSpec::Rectangular => Ok(()),
            WindowSpec::Chebyshev { sidelobe_db } if sidelobe_db > 0.0 && sidelobe_db.is_finite() => Ok(()),
            WindowSpec::Chebyshev { sidelobe_db } => {
                invalid(format!("Chebyshev sidelobe level must be positive, got {sidelobe_db}"))
            }
        }
    }

    /// Coefficients for `len` bins, scaled to unit mean so that the impulse
    /// response level of a single path is unchanged.
    pub fn coefficients(&self, len: usize) -> Result<Vec<f64>> {
        self.validate()?;
        if len == 0 {
            return invalid("window length must be positive");
        }
        let mut w = match *self {
            WindowSpec::Rectangular => vec![1.0; len],
            WindowSpec::Chebyshev { sidelobe_db } => chebyshev_window(len, sidelobe_db),
        };
        let mean = w.iter().sum::<f64>() / len as f64;
        w.iter_mut().for_each(|v| *v /= mean);
        Ok(w)
    }

    /// Equivalent noise bandwidth `mean(w²)/mean(w)²`, in dB. This is the
    /// rise of the white-noise floor relative to a single path.
    pub fn enbw_db(&self, len: usize) -> Result<f64> {
        let w = self.coefficients(len)?;
        let p = w.iter().map(|v| v * v).sum::<f64>() / len as f64;
        Ok(10.0 * p.log10())
    }
}

impl fmt::Display for WindowSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            WindowSpec::Rectangular => write!(f, "rectangular"),
            WindowSpec::Chebyshev { sidelobe_db } => write!(f, "chebyshev:{sidelobe_db}"),
        }
    }
}

impl TryFrom<String> for WindowSpec {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<WindowSpec> for String {
    fn from(w: WindowSpec) -> String {
        w.to_string()
    }
}

impl FromStr for WindowSpec {
    type Err = Error;

    /// Accepts `rectangular`, `none` or `chebyshev:<sidelobe dB>`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().to_ascii_lowercase();
        let (kind, arg) = match s.split_once(':') {
            Some((k, a)) => (k, Some(a)),
            None => (s.as_str(), None),
        };
        let spec = match (kind, arg) {
            ("rectangular" | "rect" | "none", None) => WindowSpec::Rectangular,
            ("chebyshev" | "chebwin", Some(a)) => {
                let sidelobe_db = a.parse().map_err(|_| Error::InvalidArgument(format!("bad sidelobe level '{a}'")))?;
                WindowSpec::Chebyshev { sidelobe_db }
            }
            ("chebyshev" | "chebwin", None) => WindowSpec::Chebyshev { sidelobe_db: 80.0 },
            _ => return invalid(format!("unsupported window '{s}'")),
        };
        spec.validate()?;
        Ok(spec)
    }
}

/// Dolph-Chebyshev window with equiripple sidelobes `sidelobe_db` below the
/// main lobe, peak normalized to 1. Built from the Chebyshev polynomial
/// samples in the lag domain and a DFT.
pub fn chebyshev_window(len: usize, sidelobe_db: f64) -> Vec<f64> {
    if len == 1 {
        return vec![1.0];
    }
    let order = (len - 1) as f64;
    let beta = ((10f64.powf(sidelobe_db / 20.0)).acosh() / order).cosh();
    let m = len as f64;
    let mut p: Vec<Complex64> = (0..len)
        .map(|k| {
            let x = beta * (std::f64::consts::PI * k as f64 / m).cos();
            let v = if x > 1.0 {
                (order * x.acosh()).cosh()
            } else if x < -1.0 {
                let sign = if len % 2 == 1 { 1.0 } else { -1.0 };
                sign * (order * (-x).acosh()).cosh()
            } else {
                (order * x.acos()).cos()
            };
            Complex64::new(v, 0.0)
        })
        .collect();
    if len.is_multiple_of(2) {
        for (k, v) in p.iter_mut().enumerate() {
            *v *= Complex64::from_polar(1.0, std::f64::consts::PI * k as f64 / m);
        }
    }
    FftPair::new(len).forward(&mut p);
    let re: Vec<f64> = p.iter().map(|v| v.re).collect();
    let w: Vec<f64> = if len % 2 == 1 {
        let half = len.div_ceil(2);
        re[1..half].iter().rev().chain(&re[..half]).copied().collect()
    } else {
        let half = len / 2 + 1;
        re[1..half].iter().rev().chain(&re[1..half]).copied().collect()
    };
    let peak = w.iter().cloned().fold(f64::MIN, f64::max);
    w.into_iter().map(|v| v / peak).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Sidelobe peak of the window's transfer function, dB relative to its
    /// main lobe, by a zero-padded DFT.
    fn sidelobe_peak_db(w: &[f64], pad: usize) -> (f64, usize) {
        let n = w.len() * pad;
        let mut buf = vec![Complex64::new(0.0, 0.0); n];
        for (b, &v) in buf.iter_mut().zip(w) {
            *b = Complex64::new(v, 0.0);
        }
        FftPair::new(n).forward(&mut buf);
        let mag: Vec<f64> = buf.iter().map(|v| v.norm()).collect();
        let main = mag[0];
        let mut k = 1;
        while k < n / 2 && mag[k + 1] < mag[k] {
            k += 1;
        }
        let side = mag[k..n - k + 1].iter().cloned().fold(0.0, f64::max);
        (20.0 * (side / main).log10(), k)
    }

    #[test]
    fn matches_reference_values() {
        // scipy.signal.windows.chebwin(7, 80) and chebwin(8, 80)
        let odd = [0.0649420321, 0.3362404558, 0.7714656886, 1.0, 0.7714656886, 0.3362404558, 0.0649420321];
        for (a, b) in chebyshev_window(7, 80.0).iter().zip(&odd) {
            assert!((a - b).abs() < 1e-9, "{a} {b}");
        }
        let even = [0.0453356979, 0.2505294589, 0.6460866198, 1.0, 1.0, 0.6460866198, 0.2505294589, 0.0453356979];
        for (a, b) in chebyshev_window(8, 80.0).iter().zip(&even) {
            assert!((a - b).abs() < 1e-9, "{a} {b}");
        }
    }

    #[test]
    fn sidelobes_meet_design() {
        for len in [64, 65, 2000] {
            let w = chebyshev_window(len, 80.0);
            let (side, _) = sidelobe_peak_db(&w, 16);
            assert!(side <= -80.0 + 1e-6, "len {len}: {side}");
            assert!(side > -80.5, "len {len}: {side}");
        }
    }

    #[test]
    fn symmetric() {
        for len in [64, 2000, 33] {
            let w = chebyshev_window(len, 80.0);
            for k in 0..len {
                assert!((w[k] - w[len - 1 - k]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn deeper_sidelobes_widen_main_lobe() {
        let (_, narrow) = sidelobe_peak_db(&chebyshev_window(64, 80.0), 16);
        let (_, wide) = sidelobe_peak_db(&chebyshev_window(64, 200.0), 16);
        assert!(wide > narrow, "{wide} vs {narrow}");
    }

    #[test]
    fn parse_and_normalize() {
        assert_eq!("chebyshev:80".parse::<WindowSpec>().unwrap(), WindowSpec::chebyshev(80.0));
        assert_eq!("none".parse::<WindowSpec>().unwrap(), WindowSpec::Rectangular);
        assert!("hann".parse::<WindowSpec>().is_err());
        assert!("chebyshev:-3".parse::<WindowSpec>().is_err());
        assert!("chebyshev:abc".parse::<WindowSpec>().is_err());
        let w = WindowSpec::chebyshev(80.0).coefficients(2000).unwrap();
        assert!((w.iter().sum::<f64>() / 2000.0 - 1.0).abs() < 1e-12);
        assert_eq!(WindowSpec::Rectangular.enbw_db(10).unwrap(), 0.0);
        let spec = WindowSpec::chebyshev(80.0);
        assert_eq!(spec.to_string().parse::<WindowSpec>().unwrap(), spec);
    }
}
