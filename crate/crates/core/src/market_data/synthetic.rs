//! Seeded factor-model market generator.
//!
//! Block member `i` of block `b` draws `r_i(t) = λ_b(t) f_k(t) + sqrt(1 - λ_b(t)²) ξ_i(t)`,
//! where `k` is the factor the block loads on; noise stocks draw `ξ_i(t)`. All factors and
//! idiosyncratic terms are i.i.d. standard normal. Returns are scaled by a daily volatility
//! and compounded from a price of 100.

use chrono::{Datelike, Days, NaiveDate, Weekday};
use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::PricePanel;
use crate::error::{Error, Result};

const DAILY_VOL: f64 = 0.01;
const START_PRICE: f64 = 100.0;

/// A group of stocks with a common loading on one factor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FactorBlock {
    pub size: usize,
    pub loading: f64,
    /// Factor id; blocks with the same id share the factor series.
    pub factor: usize,
    /// `(day, loading)`: from return index `day` onwards the block uses the new loading.
    pub switch: Option<(usize, f64)>,
}

impl FactorBlock {
    pub fn new(size: usize, loading: f64) -> Self {
        Self {
            size,
            loading,
            factor: 0,
            switch: None,
        }
    }

    pub fn on_factor(mut self, factor: usize) -> Self {
        self.factor = factor;
        self
    }

    pub fn with_switch(mut self, day: usize, loading: f64) -> Self {
        self.switch = Some((day, loading));
        self
    }

    fn loading_at(&self, t: usize) -> f64 {
        match self.switch {
            Some((day, after)) if t >= day => after,
            _ => self.loading,
        }
    }
}

/// Which generator population a ticker came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Population {
    Block(usize),
    Noise,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MarketModel {
    pub blocks: Vec<FactorBlock>,
    pub n_noise: usize,
    /// Number of price dates (returns are one fewer).
    pub days: usize,
    pub seed: u64,
}

impl MarketModel {
    fn validate(&self) -> Result<()> {
        if self.days < 2 {
            return Err(Error::InvalidArgument(format!("days = {} < 2", self.days)));
        }
        if self.n_stocks() == 0 {
            return Err(Error::InvalidArgument("synthetic market has no stocks".into()));
        }
        for block in &self.blocks {
            let loadings = std::iter::once(block.loading).chain(block.switch.map(|s| s.1));
            for l in loadings {
                if !(0.0..1.0).contains(&l) {
                    return Err(Error::InvalidArgument(format!(
                        "block loading {l} outside [0, 1)"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn n_stocks(&self) -> usize {
        self.blocks.iter().map(|b| b.size).sum::<usize>() + self.n_noise
    }

    /// Ground-truth population of every ticker, in panel order.
    pub fn populations(&self) -> Vec<Population> {
        let mut out = Vec::with_capacity(self.n_stocks());
        for (b, block) in self.blocks.iter().enumerate() {
            out.extend(std::iter::repeat_n(Population::Block(b), block.size));
        }
        out.extend(std::iter::repeat_n(Population::Noise, self.n_noise));
        out
    }

    pub fn tickers(&self) -> Vec<String> {
        let mut out = Vec::with_capacity(self.n_stocks());
        for (b, block) in self.blocks.iter().enumerate() {
            out.extend((0..block.size).map(|k| format!("B{b}_{k:03}")));
        }
        out.extend((0..self.n_noise).map(|k| format!("N_{k:03}")));
        out
    }

    /// Generates the price panel. Bit-identical for identical models.
    pub fn generate(&self) -> Result<PricePanel> {
        self.validate()?;
        let n = self.n_stocks();
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let mut prices = Array2::zeros((n, self.days));
        prices.column_mut(0).fill(START_PRICE);
        let mut log_price = vec![START_PRICE.ln(); n];
        let n_factors = self.blocks.iter().map(|b| b.factor + 1).max().unwrap_or(0);
        let mut factors = vec![0.0; n_factors];

        for t in 0..self.days - 1 {
            for f in factors.iter_mut() {
                *f = StandardNormal.sample(&mut rng);
            }
            let mut i = 0;
            for block in &self.blocks {
                let lambda = block.loading_at(t);
                let idio = (1.0 - lambda * lambda).sqrt();
                let f = factors[block.factor];
                for _ in 0..block.size {
                    let xi: f64 = StandardNormal.sample(&mut rng);
                    log_price[i] += DAILY_VOL * (lambda * f + idio * xi);
                    i += 1;
                }
            }
            for _ in 0..self.n_noise {
                let xi: f64 = StandardNormal.sample(&mut rng);
                log_price[i] += DAILY_VOL * xi;
                i += 1;
            }
            for (k, lp) in log_price.iter().enumerate() {
                prices[[k, t + 1]] = lp.exp();
            }
        }

        PricePanel::new(business_days(self.days), self.tickers(), prices)
    }
}

/// Single-block market: `n_block` stocks sharing one factor with loading `block_loading`
/// plus `n_noise` independent stocks.
pub fn synthetic_market(
    n_block: usize,
    n_noise: usize,
    block_loading: f64,
    days: usize,
    seed: u64,
) -> Result<PricePanel> {
    MarketModel {
        blocks: vec![FactorBlock::new(n_block, block_loading)],
        n_noise,
        days,
        seed,
    }
    .generate()
}

/// `count` consecutive weekdays starting 2000-01-03.
pub fn business_days(count: usize) -> Vec<NaiveDate> {
    let mut day = NaiveDate::from_ymd_opt(2000, 1, 3).expect("valid date");
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        if !matches!(day.weekday(), Weekday::Sat | Weekday::Sun) {
            out.push(day);
        }
        day = day + Days::new(1);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::market_data::{correlation_matrix, log_returns};

    fn mean_within_block_corr(panel: &PricePanel, members: usize) -> f64 {
        let r = log_returns(panel).unwrap();
        let corr = correlation_matrix(&r, 0..r.n_cols(), 0).unwrap();
        let mut sum = 0.0;
        let mut count = 0;
        for i in 0..members {
            for j in 0..i {
                sum += corr.values()[[i, j]];
                count += 1;
            }
        }
        sum / count as f64
    }

    #[test]
    fn deterministic_given_seed() {
        let a = synthetic_market(5, 3, 0.6, 40, 11).unwrap();
        let b = synthetic_market(5, 3, 0.6, 40, 11).unwrap();
        let c = synthetic_market(5, 3, 0.6, 40, 12).unwrap();
        assert_eq!(a, b);
        assert!(a.prices().iter().zip(b.prices()).all(|(x, y)| x.to_bits() == y.to_bits()));
        assert_ne!(a, c);
    }

    #[test]
    fn shape_and_positivity() {
        let p = synthetic_market(4, 2, 0.5, 30, 1).unwrap();
        assert_eq!(p.n_tickers(), 6);
        assert_eq!(p.n_dates(), 30);
        assert!(p.prices().iter().all(|&x| x > 0.0));
        assert_eq!(p.tickers()[0], "B0_000");
        assert_eq!(p.tickers()[5], "N_001");
        assert_eq!(p.dates()[0].to_string(), "2000-01-03");
        // 2000-01-07 is a Friday, the next date is Monday
        assert_eq!(p.dates()[5].to_string(), "2000-01-10");
    }

    #[test]
    fn no_shared_factor_means_no_correlation() {
        let p = synthetic_market(20, 0, 0.0, 2000, 5).unwrap();
        let mean = mean_within_block_corr(&p, 20);
        // sample correlations of independent series have sd ~ 1/sqrt(1999)
        assert!(mean.abs() < 0.01, "{mean}");
    }

    #[test]
    fn near_unit_loading_is_near_perfectly_correlated() {
        let p = synthetic_market(10, 0, 0.9999, 300, 5).unwrap();
        assert!(mean_within_block_corr(&p, 10) > 0.999);
    }

    #[test]
    fn within_block_correlation_near_loading_squared() {
        // λ² = 0.64; a single 500-day sample sits within ±0.05 of it
        for seed in [1, 2, 3] {
            let p = synthetic_market(20, 5, 0.8, 500, seed).unwrap();
            let mean = mean_within_block_corr(&p, 20);
            assert!((mean - 0.64).abs() < 0.05, "seed {seed}: {mean}");
        }
    }

    #[test]
    fn loading_switch_changes_regime() {
        let model = MarketModel {
            blocks: vec![FactorBlock::new(10, 0.1).with_switch(300, 0.9)],
            n_noise: 0,
            days: 600,
            seed: 3,
        };
        let panel = model.generate().unwrap();
        let r = log_returns(&panel).unwrap();
        let early = correlation_matrix(&r, 0..300, 0).unwrap();
        let late = correlation_matrix(&r, 300..599, 1).unwrap();
        assert!(early.values()[[0, 1]] < 0.3);
        assert!(late.values()[[0, 1]] > 0.6);
    }

    #[test]
    fn rejects_bad_arguments() {
        assert!(synthetic_market(2, 2, 1.0, 10, 0).is_err());
        assert!(synthetic_market(2, 2, -0.1, 10, 0).is_err());
        assert!(synthetic_market(2, 2, 0.5, 1, 0).is_err());
        assert!(synthetic_market(0, 0, 0.5, 10, 0).is_err());
    }
}
