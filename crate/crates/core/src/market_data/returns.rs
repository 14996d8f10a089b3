use std::ops::Range;

use ndarray::{Array2, ArrayView1, Axis};

use super::PricePanel;
use crate::error::{Error, Result};

/// Daily log returns, one row per ticker.
#[derive(Debug, Clone, PartialEq)]
pub struct ReturnMatrix {
    tickers: Vec<String>,
    returns: Array2<f64>,
}

impl ReturnMatrix {
    pub fn new(tickers: Vec<String>, returns: Array2<f64>) -> Result<Self> {
        if returns.nrows() != tickers.len() {
            return Err(Error::Dimension(format!(
                "{} return rows for {} tickers",
                returns.nrows(),
                tickers.len()
            )));
        }
        if returns.iter().any(|r| !r.is_finite()) {
            return Err(Error::InvalidArgument("returns must be finite".into()));
        }
        Ok(Self { tickers, returns })
    }

    pub fn tickers(&self) -> &[String] {
        &self.tickers
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.returns
    }

    pub fn n_tickers(&self) -> usize {
        self.returns.nrows()
    }

    pub fn n_cols(&self) -> usize {
        self.returns.ncols()
    }
}

/// `G_i(t) = ln P_i(t+1) - ln P_i(t)` with a one-day horizon.
pub fn log_returns(panel: &PricePanel) -> Result<ReturnMatrix> {
    let d = panel.n_dates();
    if d < 2 {
        return Err(Error::InvalidArgument(format!(
            "log returns need at least 2 dates, panel has {d}"
        )));
    }
    let logs = panel.prices().mapv(f64::ln);
    let mut returns = Array2::zeros((panel.n_tickers(), d - 1));
    for (mut out, row) in returns.outer_iter_mut().zip(logs.outer_iter()) {
        for t in 0..d - 1 {
            out[t] = row[t + 1] - row[t];
        }
    }
    ReturnMatrix::new(panel.tickers().to_vec(), returns)
}

/// Sliding window geometry in trading days.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WindowSpec {
    width: usize,
    step: usize,
}

impl Default for WindowSpec {
    fn default() -> Self {
        Self { width: 62, step: 1 }
    }
}

impl WindowSpec {
    pub fn new(width: usize, step: usize) -> Result<Self> {
        if width < 2 {
            return Err(Error::InvalidArgument(format!("window width {width} < 2")));
        }
        if step < 1 {
            return Err(Error::InvalidArgument("window step must be at least 1".into()));
        }
        Ok(Self { width, step })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn step(&self) -> usize {
        self.step
    }

    /// Number of windows over `cols` return columns, or an error if none fit.
    pub fn count(&self, cols: usize) -> Result<usize> {
        if self.width > cols {
            return Err(Error::WindowTooWide {
                width: self.width,
                available: cols,
            });
        }
        Ok((cols - self.width) / self.step + 1)
    }

    pub fn ranges(&self, cols: usize) -> Result<Vec<Range<usize>>> {
        let m = self.count(cols)?;
        Ok((0..m)
            .map(|w| {
                let start = w * self.step;
                start..start + self.width
            })
            .collect())
    }
}

/// Column ranges of every window over `returns`.
pub fn sliding_windows(returns: &ReturnMatrix, spec: WindowSpec) -> Result<Vec<Range<usize>>> {
    spec.ranges(returns.n_cols())
}

/// Equal-time cross-correlation matrix of one window.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrMatrix {
    values: Array2<f64>,
    window_index: usize,
    /// Stocks with zero return variance inside the window.
    degenerate: Vec<usize>,
}

impl CorrMatrix {
    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn window_index(&self) -> usize {
        self.window_index
    }

    pub fn degenerate(&self) -> &[usize] {
        &self.degenerate
    }
}

fn is_flat(std: f64, scale: f64) -> bool {
    std == 0.0 || std <= 1e-12 * scale
}

/// Per-window normalization followed by the average product of normalized returns.
///
/// A stock with zero variance in the window is reported as uncorrelated with everyone.
pub fn correlation_matrix(
    returns: &ReturnMatrix,
    window: Range<usize>,
    window_index: usize,
) -> Result<CorrMatrix> {
    if window.end > returns.n_cols() || window.start >= window.end {
        return Err(Error::InvalidArgument(format!(
            "window {window:?} outside 0..{}",
            returns.n_cols()
        )));
    }
    let len = window.len();
    if len < 2 {
        return Err(Error::InvalidArgument("window length must be at least 2".into()));
    }
    let n = returns.n_tickers();
    let slice = returns.values().slice(ndarray::s![.., window.clone()]);

    let mut normalized = Array2::<f64>::zeros((n, len));
    let mut degenerate = Vec::new();
    for (i, row) in slice.outer_iter().enumerate() {
        let (mean, std) = mean_std(row);
        let scale = row.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
        if is_flat(std, scale) {
            degenerate.push(i);
            continue;
        }
        for (g, x) in normalized.row_mut(i).iter_mut().zip(row) {
            *g = (x - mean) / std;
        }
    }

    let mut values = normalized.dot(&normalized.t()) / len as f64;
    for v in values.iter_mut() {
        *v = v.clamp(-1.0, 1.0);
    }
    for &i in &degenerate {
        values.row_mut(i).fill(0.0);
        values.column_mut(i).fill(0.0);
    }
    for i in 0..n {
        values[[i, i]] = 1.0;
        for j in 0..i {
            let avg = 0.5 * (values[[i, j]] + values[[j, i]]);
            values[[i, j]] = avg;
            values[[j, i]] = avg;
        }
    }
    if !degenerate.is_empty() {
        let names: Vec<&str> = degenerate
            .iter()
            .map(|&i| returns.tickers()[i].as_str())
            .collect();
        log::warn!(
            "window {window_index}: zero-variance returns for {}; treated as uncorrelated",
            names.join(", ")
        );
    }
    Ok(CorrMatrix {
        values,
        window_index,
        degenerate,
    })
}

/// Population mean and standard deviation.
fn mean_std(x: ArrayView1<f64>) -> (f64, f64) {
    let n = x.len() as f64;
    let mean = x.sum() / n;
    let var = x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Symmetric N×N coupling strengths between oscillators.
#[derive(Debug, Clone, PartialEq)]
pub struct CouplingMatrix {
    values: Array2<f64>,
    window_index: usize,
}

impl CouplingMatrix {
    /// Wraps an arbitrary square, finite matrix.
    ///
    /// Used to inject couplings that do not come from a correlation matrix
    /// (uncoupled or uniform test systems), so the `[0, 2]` range is not enforced.
    pub fn from_raw(values: Array2<f64>, window_index: usize) -> Result<Self> {
        if values.nrows() != values.ncols() || values.nrows() == 0 {
            return Err(Error::Dimension(format!(
                "coupling matrix must be square and non-empty, got {:?}",
                values.dim()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("coupling entries must be finite".into()));
        }
        Ok(Self {
            values,
            window_index,
        })
    }

    /// Uniform coupling `c` between every pair, self-coupling included.
    pub fn uniform(n: usize, c: f64) -> Result<Self> {
        Self::from_raw(Array2::from_elem((n, n), c), 0)
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn window_index(&self) -> usize {
        self.window_index
    }

    pub fn n(&self) -> usize {
        self.values.nrows()
    }

    /// Row sums.
    pub fn row_sums(&self) -> Vec<f64> {
        self.values.sum_axis(Axis(1)).to_vec()
    }

    /// Returns a copy with rows and columns reordered so that new index `k` is old `perm[k]`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        let n = self.n();
        if perm.len() != n {
            return Err(Error::Dimension("permutation length".into()));
        }
        let values = Array2::from_shape_fn((n, n), |(a, b)| self.values[[perm[a], perm[b]]]);
        Self::from_raw(values, self.window_index)
    }
}

/// `sqrt(2 (1 + r))`, kept inside `[0, 2]`.
pub fn coupling_kernel(r: f64) -> f64 {
    (2.0 * (1.0 + r)).max(0.0).sqrt().min(2.0)
}

/// `C_ij = sqrt(2 (1 + R_ij))`, with the diagonal pinned at 2.
pub fn coupling_matrix(corr: &CorrMatrix) -> CouplingMatrix {
    let mut values = corr.values().mapv(coupling_kernel);
    values.diag_mut().fill(2.0);
    CouplingMatrix {
        values,
        window_index: corr.window_index(),
    }
}
