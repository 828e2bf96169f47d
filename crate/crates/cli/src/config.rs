//! Scenario file: one JSON document with a section per subcommand.

use std::f64::consts::PI;
use std::path::Path;

use knotspin::dilation::DEFAULT_MARGIN;
use knotspin::evolve::BandSelector;
use knotspin::nvsim::{Dephasing, NvParams};
use knotspin::pipeline::NoiseConfig;
use knotspin::tomo::{PlRates, DEFAULT_SHOTS, DEFAULT_STARTS};
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Scenario {
    /// Preset name or path to a model parameter file.
    pub model: Option<String>,
    pub grid: Option<usize>,
    pub seed: Option<u64>,
    pub nv: NvChoice,
    pub evolve: EvolveSection,
    pub dilate: DilateSection,
    pub simulate: SimulateSection,
    pub tomo: TomoSection,
    pub pipeline: PipelineSection,
}

impl Scenario {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read {}: {e}", path.display())))?;
        serde_json::from_str(&text)
            .map_err(|e| CliError::Usage(format!("invalid config {}: {e}", path.display())))
    }
}

/// NV parameters given by preset name or in full.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum NvChoice {
    Preset(String),
    Params(NvParams),
}

impl Default for NvChoice {
    fn default() -> Self {
        NvChoice::Preset("purified".into())
    }
}

impl NvChoice {
    pub fn resolve(&self) -> Result<NvParams, CliError> {
        match self {
            NvChoice::Preset(name) => match name.as_str() {
                "purified" => Ok(NvParams::purified()),
                "natural_abundance" => Ok(NvParams::natural_abundance()),
                other => Err(CliError::Usage(format!(
                    "unknown NV preset '{other}' (purified, natural_abundance)"
                ))),
            },
            NvChoice::Params(p) => Ok(*p),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvolveSection {
    pub k: f64,
    /// Dimensionless rate scale.
    pub lambda: f64,
    /// Dimensionless evolution time.
    pub duration: f64,
    pub dt: f64,
    pub band: BandSelector,
    /// Samples drawn for the k fit.
    pub samples: usize,
    /// Gaussian noise on the sampled populations.
    pub noise: f64,
    /// Search window for the k fit; full zone when absent.
    pub fit_window: Option<[f64; 2]>,
}

impl Default for EvolveSection {
    fn default() -> Self {
        Self {
            k: 0.6 * PI,
            lambda: 1.0,
            duration: 8.0,
            dt: 0.004,
            band: BandSelector::Dominant,
            samples: 20,
            noise: 0.03,
            fit_window: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DilateSection {
    pub k: f64,
    pub band: BandSelector,
    /// µs; `8/λ` when absent.
    pub duration: Option<f64>,
    pub intervals: usize,
    pub margin: f64,
    pub eta0: Option<f64>,
    /// Shift the Hamiltonian so its dominant eigenvalue is real before compiling.
    pub gain_offset: bool,
}

impl Default for DilateSection {
    fn default() -> Self {
        Self {
            k: 0.85 * PI,
            band: BandSelector::Dominant,
            duration: None,
            intervals: 2000,
            margin: DEFAULT_MARGIN,
            eta0: None,
            gain_offset: true,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateSection {
    pub dephasing: Dephasing,
    pub ensemble: usize,
    pub selective: bool,
    pub rwa: bool,
}

impl Default for SimulateSection {
    fn default() -> Self {
        Self {
            dephasing: Dephasing::None,
            ensemble: 1,
            selective: true,
            rwa: true,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TomoSection {
    /// Counts JSON to reconstruct; synthetic counts from `k`, `band` otherwise.
    pub counts_file: Option<String>,
    pub k: f64,
    pub band: BandSelector,
    /// Shots per sequence; exact expected counts when zero.
    pub shots: u64,
    pub rates: PlRates,
    pub starts: usize,
}

impl Default for TomoSection {
    fn default() -> Self {
        Self {
            counts_file: None,
            k: 0.6 * PI,
            band: BandSelector::Dominant,
            shots: DEFAULT_SHOTS,
            rates: PlRates::default(),
            starts: DEFAULT_STARTS,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineSection {
    pub k_points: usize,
    /// `"noiseless"`, `"experiment_scale"` or a full noise description.
    pub noise: NoiseChoice,
    pub rates: PlRates,
    pub margin: f64,
    pub starts: usize,
    pub fit_samples: usize,
    pub fit_window: f64,
}

impl Default for PipelineSection {
    fn default() -> Self {
        Self {
            k_points: 20,
            noise: NoiseChoice::Preset("experiment_scale".into()),
            rates: PlRates::default(),
            margin: DEFAULT_MARGIN,
            starts: DEFAULT_STARTS,
            fit_samples: 20,
            fit_window: 0.25 * PI,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum NoiseChoice {
    Preset(String),
    Config(NoiseConfig),
}

impl NoiseChoice {
    pub fn resolve(&self) -> Result<NoiseConfig, CliError> {
        match self {
            NoiseChoice::Preset(name) => match name.as_str() {
                "noiseless" => Ok(NoiseConfig::noiseless()),
                "experiment_scale" => Ok(NoiseConfig::experiment_scale()),
                other => Err(CliError::Usage(format!(
                    "unknown noise preset '{other}' (noiseless, experiment_scale)"
                ))),
            },
            NoiseChoice::Config(c) => Ok(*c),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_object_is_all_defaults() {
        let s: Scenario = serde_json::from_str("{}").unwrap();
        assert!(s.model.is_none());
        assert_eq!(s.evolve.samples, 20);
        assert_eq!(s.nv.resolve().unwrap(), NvParams::purified());
    }

    #[test]
    fn sections_parse() {
        let s: Scenario = serde_json::from_str(
            r#"{"model": "unknot", "nv": "natural_abundance",
                "simulate": {"dephasing": "quasistatic", "ensemble": 8},
                "pipeline": {"noise": "noiseless", "k_points": 16},
                "tomo": {"band": "subdominant", "shots": 0}}"#,
        )
        .unwrap();
        assert_eq!(s.nv.resolve().unwrap(), NvParams::natural_abundance());
        assert_eq!(s.simulate.dephasing, Dephasing::Quasistatic);
        assert_eq!(
            s.pipeline.noise.resolve().unwrap(),
            NoiseConfig::noiseless()
        );
        assert_eq!(s.tomo.band, BandSelector::Subdominant);
    }

    #[test]
    fn unknown_fields_are_rejected() {
        assert!(serde_json::from_str::<Scenario>(r#"{"evolve": {"kk": 1}}"#).is_err());
        assert!(NvChoice::Preset("diamond".into()).resolve().is_err());
    }
}
