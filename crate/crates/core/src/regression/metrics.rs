use crate::error::{Error, Result};

/// Coefficient of determination `1 - SS_res / SS_tot`. May be negative.
pub fn r_squared(predictions: &[f64], truths: &[f64]) -> Result<f64> {
    if predictions.len() != truths.len() {
        return Err(Error::invalid("predictions and truths differ in length"));
    }
    if truths.len() < 2 {
        return Err(Error::precondition("R^2 needs at least two points"));
    }
    let mean = truths.iter().sum::<f64>() / truths.len() as f64;
    let ss_tot: f64 = truths.iter().map(|t| (t - mean) * (t - mean)).sum();
    if ss_tot <= 0.0 {
        return Err(Error::UndefinedMetric);
    }
    let ss_res: f64 = predictions.iter().zip(truths).map(|(p, t)| (p - t) * (p - t)).sum();
    Ok(1.0 - ss_res / ss_tot)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_and_mean_predictions() {
        let t = [1.0, 2.0, 5.0];
        assert_eq!(r_squared(&t, &t).unwrap(), 1.0);
        let m = [8.0 / 3.0; 3];
        assert!(r_squared(&m, &t).unwrap().abs() < 1e-12);
    }

    #[test]
    fn hand_computed() {
        assert!((r_squared(&[1.0, 2.0, 2.0], &[1.0, 2.0, 3.0]).unwrap() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn constant_truths_undefined() {
        assert_eq!(r_squared(&[1.0, 2.0], &[3.0, 3.0]), Err(Error::UndefinedMetric));
    }
}
