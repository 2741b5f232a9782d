use crate::error::{invalid, Result};
use crate::units::SPEED_OF_LIGHT;

/// Free-space path loss `20·log10(4π·d·f/c)`, dB.
pub fn fspl_db(distance_m: f64, frequency_hz: f64) -> Result<f64> {
    if !(distance_m > 0.0) || !(frequency_hz > 0.0) {
        return invalid("distance and frequency must be positive");
    }
    Ok(20.0 * (4.0 * std::f64::consts::PI * distance_m * frequency_hz / SPEED_OF_LIGHT).log10())
}

/// Boresight gain of each of two identical antennas from a measured S21
/// (negative, dB) at a known distance. `feed_loss_db` is the per-antenna
/// feed loss that was included in the measurement.
pub fn estimate_antenna_gain(s21_db: f64, distance_m: f64, frequency_hz: f64, feed_loss_db: f64) -> Result<f64> {
    Ok((fspl_db(distance_m, frequency_hz)? + s21_db) / 2.0 + feed_loss_db)
}

/// S21 expected between two identical antennas of the given gain.
pub fn expected_s21_db(gain_dbi: f64, distance_m: f64, frequency_hz: f64, feed_loss_db: f64) -> Result<f64> {
    Ok(2.0 * (gain_dbi - feed_loss_db) - fspl_db(distance_m, frequency_hz)?)
}
