use nalgebra::{DMatrix, SymmetricEigen};

use super::Cone;

const SQRT2: f64 = std::f64::consts::SQRT_2;

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum ConeError {
    #[error("block length {got} does not match cone dimension {want}")]
    DimMismatch { got: usize, want: usize },
    #[error("eigensolver failed in PSD projection")]
    Eigen,
}

/// Euclidean projection of `block` onto `cone`.
pub fn project_cone(block: &[f64], cone: Cone) -> Result<Vec<f64>, ConeError> {
    let mut out = block.to_vec();
    project_in_place(&mut out, cone, false)?;
    Ok(out)
}

/// Projection onto the dual cone; identical to [`project_cone`] except that
/// the dual of the zero cone is the whole space.
pub fn project_dual_cone(block: &[f64], cone: Cone) -> Result<Vec<f64>, ConeError> {
    let mut out = block.to_vec();
    project_in_place(&mut out, cone, true)?;
    Ok(out)
}

pub(crate) fn project_in_place(x: &mut [f64], cone: Cone, dual: bool) -> Result<(), ConeError> {
    if x.len() != cone.rows() {
        return Err(ConeError::DimMismatch { got: x.len(), want: cone.rows() });
    }
    match cone {
        Cone::Zero(_) => {
            if !dual {
                x.iter_mut().for_each(|v| *v = 0.0);
            }
        }
        Cone::NonNeg(_) => x.iter_mut().for_each(|v| *v = v.max(0.0)),
        Cone::Soc(_) => project_soc(x),
        Cone::Psd(n) => project_psd(x, n)?,
    }
    Ok(())
}

fn project_soc(x: &mut [f64]) {
    if x.is_empty() {
        return;
    }
    let t = x[0];
    let nx = x[1..].iter().map(|v| v * v).sum::<f64>().sqrt();
    if nx <= t {
        return;
    }
    if nx <= -t {
        x.iter_mut().for_each(|v| *v = 0.0);
        return;
    }
    let alpha = 0.5 * (t + nx);
    x[0] = alpha;
    let s = alpha / nx;
    x[1..].iter_mut().for_each(|v| *v *= s);
}

fn project_psd(x: &mut [f64], n: usize) -> Result<(), ConeError> {
    if n == 0 {
        return Ok(());
    }
    if n == 1 {
        x[0] = x[0].max(0.0);
        return Ok(());
    }
    let m = smat(x, n);
    let eig = SymmetricEigen::try_new(m, 1e-14, 5_000).ok_or(ConeError::Eigen)?;
    if eig.eigenvalues.iter().all(|&l| l >= 0.0) {
        return Ok(());
    }
    let mut out = DMatrix::<f64>::zeros(n, n);
    for (k, &l) in eig.eigenvalues.iter().enumerate() {
        if l <= 0.0 {
            continue;
        }
        let v = eig.eigenvectors.column(k);
        out.syger(l, &v, &v, 1.0);
    }
    svec_into(&out, x);
    Ok(())
}

/// Lower-triangle column-major packing with off-diagonals scaled by sqrt(2).
pub fn svec(m: &DMatrix<f64>) -> Vec<f64> {
    let n = m.nrows();
    let mut out = vec![0.0; n * (n + 1) / 2];
    svec_into(m, &mut out);
    out
}

fn svec_into(m: &DMatrix<f64>, out: &mut [f64]) {
    let n = m.nrows();
    let mut k = 0;
    for j in 0..n {
        for i in j..n {
            // syger only fills the lower triangle
            out[k] = if i == j { m[(i, j)] } else { SQRT2 * m[(i, j)] };
            k += 1;
        }
    }
}

/// Inverse of [`svec`].
pub fn smat(x: &[f64], n: usize) -> DMatrix<f64> {
    let mut m = DMatrix::<f64>::zeros(n, n);
    let mut k = 0;
    for j in 0..n {
        for i in j..n {
            if i == j {
                m[(i, j)] = x[k];
            } else {
                let v = x[k] / SQRT2;
                m[(i, j)] = v;
                m[(j, i)] = v;
            }
            k += 1;
        }
    }
    m
}
