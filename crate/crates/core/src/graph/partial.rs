//! Partial correlation through the precision matrix.
//!
//! For columns `[x, y, z1, .., zk]` the correlation matrix `R` is inverted
//! (Cholesky when positive definite, SVD pseudo-inverse otherwise) and
//! `rho = -P[x,y] / sqrt(P[x,x] * P[y,y])`.

use nalgebra::DMatrix;

use super::GraphError;

/// Residual variance (on the correlation scale) below which a series is
/// treated as fully explained by the controls.
const DEGENERATE_VARIANCE: f64 = 1e-10;
const PINV_EPS: f64 = 1e-12;

fn standardize(v: &[f64]) -> Option<Vec<f64>> {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let ss: f64 = v.iter().map(|a| (a - mean).powi(2)).sum();
    let sd = ss.sqrt();
    if !(sd > 0.0) || !sd.is_finite() {
        return None;
    }
    Some(v.iter().map(|a| (a - mean) / sd).collect())
}

fn correlation_matrix(cols: &[Vec<f64>]) -> DMatrix<f64> {
    let k = cols.len();
    DMatrix::from_fn(k, k, |i, j| {
        if i == j {
            1.0
        } else {
            cols[i].iter().zip(&cols[j]).map(|(a, b)| a * b).sum()
        }
    })
}

fn invert(r: &DMatrix<f64>) -> Result<DMatrix<f64>, GraphError> {
    if let Some(chol) = r.clone().cholesky() {
        let inv = chol.inverse();
        if inv.iter().all(|v| v.is_finite()) {
            return Ok(inv);
        }
    }
    log::debug!("correlation matrix not positive definite; using pseudo-inverse");
    r.clone()
        .pseudo_inverse(PINV_EPS)
        .map_err(|_| GraphError::DegenerateSeries)
}

/// Residual variance of column `target` after projecting out `others`,
/// on the correlation scale.
fn residual_variance(r: &DMatrix<f64>, target: usize, others: &[usize]) -> Result<f64, GraphError> {
    if others.is_empty() {
        return Ok(1.0);
    }
    let k = others.len();
    let rzz = DMatrix::from_fn(k, k, |i, j| r[(others[i], others[j])]);
    let rxz = DMatrix::from_fn(k, 1, |i, _| r[(target, others[i])]);
    let inv = invert(&rzz)?;
    let explained = (rxz.transpose() * inv * &rxz)[(0, 0)];
    Ok(1.0 - explained)
}

/// Partial correlation of `x` and `y` controlling for `controls`.
///
/// With no controls this is the Pearson coefficient.
pub fn partial_correlation(x: &[f64], y: &[f64], controls: &[&[f64]]) -> Result<f64, GraphError> {
    let n = x.len();
    if y.len() != n || controls.iter().any(|z| z.len() != n) {
        return Err(GraphError::LengthMismatch);
    }
    let needed = controls.len() + 3;
    if n < needed {
        return Err(GraphError::TooShort { n, needed });
    }
    let cols: Vec<Vec<f64>> = std::iter::once(x)
        .chain(std::iter::once(y))
        .chain(controls.iter().copied())
        .map(standardize)
        .collect::<Option<_>>()
        .ok_or(GraphError::DegenerateSeries)?;
    let r = correlation_matrix(&cols);

    if controls.is_empty() {
        return Ok(r[(0, 1)].clamp(-1.0, 1.0));
    }

    let z: Vec<usize> = (2..cols.len()).collect();
    if residual_variance(&r, 0, &z)? <= DEGENERATE_VARIANCE || residual_variance(&r, 1, &z)? <= DEGENERATE_VARIANCE {
        return Err(GraphError::DegenerateSeries);
    }

    let p = invert(&r)?;
    let denom = (p[(0, 0)] * p[(1, 1)]).sqrt();
    if !(denom > 0.0) || !denom.is_finite() {
        return Err(GraphError::DegenerateSeries);
    }
    Ok((-p[(0, 1)] / denom).clamp(-1.0, 1.0))
}

#[cfg(test)]
pub(crate) mod oracle {
    //! Residual-regression route: regress x and y on the controls by
    //! modified Gram-Schmidt, then take Pearson of the residuals.

    pub fn pearson(a: &[f64], b: &[f64]) -> f64 {
        let n = a.len() as f64;
        let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
        let mut sab = 0.0;
        let mut saa = 0.0;
        let mut sbb = 0.0;
        for (x, y) in a.iter().zip(b) {
            sab += (x - ma) * (y - mb);
            saa += (x - ma).powi(2);
            sbb += (y - mb).powi(2);
        }
        sab / (saa * sbb).sqrt()
    }

    fn residualize(v: &[f64], basis: &[Vec<f64>]) -> Vec<f64> {
        let mut r = v.to_vec();
        for q in basis {
            let dot: f64 = r.iter().zip(q).map(|(a, b)| a * b).sum();
            for (ri, qi) in r.iter_mut().zip(q) {
                *ri -= dot * qi;
            }
        }
        r
    }

    pub fn residual_partial(x: &[f64], y: &[f64], controls: &[&[f64]]) -> f64 {
        let n = x.len();
        // Orthonormal basis for span{1, z1, .., zk}.
        let mut basis: Vec<Vec<f64>> = Vec::new();
        let ones = vec![1.0 / (n as f64).sqrt(); n];
        basis.push(ones);
        for z in controls {
            // Two passes of Gram-Schmidt for stability.
            let mut v = residualize(z, &basis);
            v = residualize(&v, &basis);
            let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
            basis.push(v.iter().map(|a| a / norm).collect());
        }
        let rx = residualize(&residualize(x, &basis), &basis);
        let ry = residualize(&residualize(y, &basis), &basis);
        pearson(&rx, &ry)
    }
}
