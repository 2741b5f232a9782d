//! Physical constants and decibel helpers.

/// Speed of light in vacuum, m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Floor used when a level is undefined (zero power). Reported levels never go below this.
pub const MIN_LEVEL_DB: f64 = -300.0;

#[inline]
pub fn power_db(p: f64) -> f64 {
    if p > 0.0 {
        (10.0 * p.log10()).max(MIN_LEVEL_DB)
    } else {
        MIN_LEVEL_DB
    }
}

#[inline]
pub fn db_to_power(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

#[inline]
pub fn db_to_amplitude(db: f64) -> f64 {
    10f64.powf(db / 20.0)
}

/// Sum of powers given in dB(m), returned in dB(m).
pub fn power_sum_db(levels: &[f64]) -> f64 {
    power_db(levels.iter().map(|&l| db_to_power(l)).sum())
}
