use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Per-column centring and scaling fitted on training rows only.
#[derive(Debug, Clone, PartialEq)]
pub struct Standardizer<F: Scalar> {
    pub means: Array1<F>,
    /// Population standard deviations; constant columns get 1.
    pub scales: Array1<F>,
}

impl<F: Scalar> Standardizer<F> {
    pub fn fit(rows: ArrayView2<F>) -> Result<Self> {
        let n = rows.nrows();
        if n == 0 {
            return Err(Error::Invalid("cannot fit a standardizer on zero rows".into()));
        }
        let nf = F::from_usize(n).expect("row count");
        let d = rows.ncols();
        let mut means = Array1::<F>::zeros(d);
        for row in rows.axis_iter(Axis(0)) {
            means += &row;
        }
        means.mapv_inplace(|s| s / nf);
        let mut var = Array1::<F>::zeros(d);
        for row in rows.axis_iter(Axis(0)) {
            for ((v, &x), &m) in var.iter_mut().zip(row.iter()).zip(means.iter()) {
                let c = x - m;
                *v += c * c;
            }
        }
        let tiny = F::lit(10.0) * F::epsilon();
        let scales = var
            .iter()
            .zip(means.iter())
            .map(|(&v, &m)| {
                let sd = (v / nf).sqrt();
                if sd <= tiny * F::one().max(m.abs()) {
                    F::one()
                } else {
                    sd
                }
            })
            .collect();
        Ok(Standardizer { means, scales })
    }

    pub fn width(&self) -> usize {
        self.means.len()
    }

    fn check(&self, width: usize) -> Result<()> {
        if width != self.width() {
            return Err(Error::Dimension(format!(
                "standardizer fitted on {} features, got {width}",
                self.width()
            )));
        }
        Ok(())
    }

    pub fn transform(&self, rows: ArrayView2<F>) -> Result<Array2<F>> {
        self.check(rows.ncols())?;
        let mut out = rows.to_owned();
        for mut row in out.axis_iter_mut(Axis(0)) {
            for ((x, &m), &s) in row.iter_mut().zip(self.means.iter()).zip(self.scales.iter()) {
                *x = (*x - m) / s;
            }
        }
        Ok(out)
    }

    pub fn transform_row(&self, row: ArrayView1<F>) -> Result<Array1<F>> {
        self.check(row.len())?;
        Ok(row
            .iter()
            .zip(self.means.iter())
            .zip(self.scales.iter())
            .map(|((&x, &m), &s)| (x - m) / s)
            .collect())
    }
}
