use crate::error::{BaselineError, Result};

/// Macro-averaged Dice over the classes present in either mask.
/// Two empty masks count as a perfect match.
pub fn dice(a: &[u8], b: &[u8]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(BaselineError::Shape(format!("masks of {} and {} pixels", a.len(), b.len())));
    }
    let mut inter = [0usize; 256];
    let mut ca = [0usize; 256];
    let mut cb = [0usize; 256];
    for (&x, &y) in a.iter().zip(b) {
        ca[x as usize] += 1;
        cb[y as usize] += 1;
        if x == y {
            inter[x as usize] += 1;
        }
    }
    let mut sum = 0.0;
    let mut classes = 0usize;
    for c in 0..256 {
        let denom = ca[c] + cb[c];
        if denom > 0 {
            sum += 2.0 * inter[c] as f64 / denom as f64;
            classes += 1;
        }
    }
    Ok(if classes == 0 { 1.0 } else { sum / classes as f64 })
}
