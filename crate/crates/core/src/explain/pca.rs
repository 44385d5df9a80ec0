use std::io::Write;

use nalgebra::{DMatrix, SymmetricEigen};

use super::ExplainError;
use crate::tensor::Tensor;

/// Principal-component projection onto the two highest-variance directions
/// after mean-centering.
///
/// Each component's sign is fixed so that its largest-magnitude loading is
/// positive (the first such loading on ties), which makes the output
/// deterministic.
pub fn project_2d(vectors: &Tensor) -> Result<Tensor, ExplainError> {
    let (n, d) = vectors.require_matrix("project_2d")?;
    if n < 2 {
        return Err(ExplainError::Projection(format!("at least 2 vectors, got {n}")));
    }
    if d < 2 {
        return Err(ExplainError::Projection(format!("dimension at least 2, got {d}")));
    }
    let mut mean = vec![0.0; d];
    for i in 0..n {
        for (m, x) in mean.iter_mut().zip(vectors.row(i)) {
            *m += x / n as f64;
        }
    }
    let centered = DMatrix::from_fn(n, d, |i, j| vectors.get2(i, j) - mean[j]);
    let cov = centered.transpose() * &centered / (n as f64 - 1.0);
    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    let mut out = vec![0.0; n * 2];
    for (c, &k) in order.iter().take(2).enumerate() {
        let mut v: Vec<f64> = eig.eigenvectors.column(k).iter().copied().collect();
        let lead = (0..d).fold(0, |best, j| if v[j].abs() > v[best].abs() { j } else { best });
        if v[lead] < 0.0 {
            v.iter_mut().for_each(|x| *x = -*x);
        }
        for i in 0..n {
            out[i * 2 + c] = (0..d).map(|j| centered[(i, j)] * v[j]).sum();
        }
    }
    Ok(Tensor::matrix(n, 2, out)?)
}

/// Scatter rows `x,y,label,disease` under a `# source: …` comment naming
/// the representation that was projected (`h_cls` or `projection`).
pub fn write_scatter<W: Write>(
    mut w: W,
    points: &Tensor,
    labels: &[usize],
    diseases: &[String],
    source: &str,
) -> Result<(), ExplainError> {
    let (n, _) = points.require_matrix("write_scatter")?;
    if labels.len() != n || diseases.len() != n {
        return Err(ExplainError::Projection(format!(
            "one label and disease per point ({n} points, {} labels, {} diseases)",
            labels.len(),
            diseases.len()
        )));
    }
    writeln!(w, "# source: {source}")?;
    writeln!(w, "x,y,label,disease")?;
    for i in 0..n {
        writeln!(
            w,
            "{},{},{},{}",
            points.get2(i, 0),
            points.get2(i, 1),
            labels[i],
            diseases[i]
        )?;
    }
    Ok(())
}
