//! Plant-wide physical defaults and the calibration parameters, as carried by
//! the `physics` block of a scenario document.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::noise::{DetectorParams, RamanModel};
use crate::optics::{AttenuationModel, BpfModel};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Physics {
    pub alpha_db_per_km: AttenuationModel,
    /// Excess loss of a splitter stage on top of the ideal `10 log10(ports)`.
    pub splitter_excess_db: f64,
    pub connector_insertion_db: f64,
    pub connector_return_loss_db: f64,
    pub splitter_return_loss_db: f64,
    pub coupler_return_loss_db: f64,
    /// Every splitter/coupler traversal crosses two port connectors.
    pub port_connectors: bool,
    /// Every fiber span is patched in with a connector at each end.
    pub span_end_connectors: bool,
    pub bpf: BpfModel,
    pub raman_rho: RamanModel,
    pub detector: DetectorParams,
    /// Overrides the PLSu back-off slope of a continuous policy.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub plsu_db_per_ont: Option<f64>,
    /// Multiplier on the protocol's `clock * sifting` pulse budget.
    pub rate_scale: f64,
}

impl Default for Physics {
    fn default() -> Self {
        Physics {
            alpha_db_per_km: AttenuationModel::default(),
            splitter_excess_db: 0.5,
            connector_insertion_db: 0.3,
            connector_return_loss_db: 50.0,
            splitter_return_loss_db: 55.0,
            coupler_return_loss_db: 55.0,
            port_connectors: true,
            span_end_connectors: true,
            bpf: BpfModel::default(),
            raman_rho: RamanModel::default(),
            detector: DetectorParams::default(),
            plsu_db_per_ont: None,
            rate_scale: 1.0,
        }
    }
}

impl Physics {
    pub fn validate(&self) -> Result<()> {
        use crate::error::Error;
        self.alpha_db_per_km.validate()?;
        self.bpf.validate()?;
        self.raman_rho.validate()?;
        self.detector.validate()?;
        for (name, v) in [
            ("splitter_excess_db", self.splitter_excess_db),
            ("connector_insertion_db", self.connector_insertion_db),
        ] {
            if !(v >= 0.0) {
                return Err(Error::domain(name, v, ">= 0 dB"));
            }
        }
        for (name, v) in [
            ("connector_return_loss_db", self.connector_return_loss_db),
            ("splitter_return_loss_db", self.splitter_return_loss_db),
            ("coupler_return_loss_db", self.coupler_return_loss_db),
        ] {
            if !(v > 0.0) {
                return Err(Error::domain(name, v, "> 0 dB"));
            }
        }
        if let Some(v) = self.plsu_db_per_ont {
            if !(v >= 0.0) {
                return Err(Error::domain("plsu_db_per_ont", v, ">= 0 dB"));
            }
        }
        if !(self.rate_scale > 0.0) {
            return Err(Error::domain("rate_scale", self.rate_scale, "> 0"));
        }
        Ok(())
    }
}
