use serde::{Deserialize, Serialize};

use super::RegressorError;

/// MAE, MSE, RMSE and the coefficient of determination.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegressionMetrics {
    pub mae: f64,
    pub mse: f64,
    pub rmse: f64,
    pub r2: f64,
}

pub fn evaluate(predictions: &[f64], actuals: &[f64]) -> Result<RegressionMetrics, RegressorError> {
    if predictions.len() != actuals.len() {
        return Err(RegressorError::LengthMismatch {
            predictions: predictions.len(),
            actuals: actuals.len(),
        });
    }
    if actuals.is_empty() {
        return Err(RegressorError::EmptyInput);
    }
    if predictions.iter().chain(actuals).any(|v| !v.is_finite()) {
        return Err(RegressorError::NonFinite);
    }
    let n = actuals.len() as f64;
    let mean = actuals.iter().sum::<f64>() / n;
    let sst: f64 = actuals.iter().map(|a| (a - mean).powi(2)).sum();
    if sst == 0.0 {
        return Err(RegressorError::ZeroVariance);
    }
    let (mut abs, mut sse) = (0.0, 0.0);
    for (p, a) in predictions.iter().zip(actuals) {
        let e = p - a;
        abs += e.abs();
        sse += e * e;
    }
    let mse = sse / n;
    Ok(RegressionMetrics {
        mae: abs / n,
        mse,
        rmse: mse.sqrt(),
        r2: 1.0 - sse / sst,
    })
}
