//! Price panels, log returns, windowed correlation and coupling matrices.

mod panel;
mod returns;
mod synthetic;

pub use panel::{load_prices, DateRange, IngestReport, PanelLayout, PricePanel};
pub(crate) use panel::write_matrix_csv;
pub use returns::{
    correlation_matrix, coupling_kernel, coupling_matrix, log_returns, sliding_windows, CorrMatrix,
    CouplingMatrix, ReturnMatrix, WindowSpec,
};
pub use synthetic::{business_days, synthetic_market, FactorBlock, MarketModel, Population};
