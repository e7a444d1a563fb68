//! Windowing, statistical ensemble members, top-K selection and ingestion of
//! externally produced forecasts.

mod ensemble;
mod external;
mod model;
mod window;

pub use ensemble::{
    evaluate_members, select_top_k, Criterion, Ensemble, EnsembleForecast, ForecastScore,
};
pub use external::{read_forecast_records, write_forecast_records, ForecastRecord};
pub use model::{fit, ArCoefficients, FitReport, FittedForecaster, ForecasterSpec};
pub use window::{make_windows, WindowConfig, WindowPair};
