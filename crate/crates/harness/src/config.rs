//! Run configuration, stored as TOML.
//!
//! ```toml
//! [glide]
//! preset = "square"            # square | hexagonal | regular | custom
//! # pairs = 4                  # regular only
//! # directions = [[1.0, 0.0], [0.6, 0.8]]   # custom only
//!
//! [energy]
//! model = "quadratic-well"     # quadratic-well | screw | saddle | constant
//! center = [0.0, 0.0]
//!
//! [initial]
//! positions = [[-2.0, -1.0]]
//!
//! [run]
//! tau = [0.04, 0.02, 0.01, 0.005]
//! end_time = 2.0
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use glideflow::energy::{
    estimate_lipschitz, ConstantEnergy, Configuration, EnergyModel, ExampleField, ForceField, QuadraticWell,
    SaddleEnergy, SaddleField, ScrewEnergy, ScrewEnergyParams, LIPSCHITZ_SAMPLES,
};
use glideflow::glide::{GlideSystem, DEFAULT_TIE_TOLERANCE};
use glideflow::mms::MmsMode;
use glideflow::{Vector, vector};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{HarnessError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub glide: GlideConfig,
    pub energy: EnergyConfig,
    pub initial: InitialConfig,
    pub run: RunSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference: Option<ReferenceConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub classify: Option<ClassifyConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub norms: Option<NormsConfig>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GlidePreset {
    Square,
    Hexagonal,
    Regular,
    Custom,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GlideConfig {
    pub preset: GlidePreset,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pairs: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub directions: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tie_tolerance: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    QuadraticWell,
    Screw,
    Saddle,
    Constant,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnergyConfig {
    pub model: ModelKind,
    /// Well centre or confinement centre.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub center: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub confinement_radius: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub confinement_stiffness: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub domain_radius: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scale: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub level: Option<f64>,
    /// Bound on `|∇E|`; sampled around the initial state when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lipschitz: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialConfig {
    pub positions: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub burgers: Option<Vec<i8>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModeConfig {
    Exact,
    QuadraticModel,
}

impl From<ModeConfig> for MmsMode {
    fn from(m: ModeConfig) -> Self {
        match m {
            ModeConfig::Exact => MmsMode::Exact,
            ModeConfig::QuadraticModel => MmsMode::QuadraticModel,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    pub tau: Vec<f64>,
    pub end_time: f64,
    /// Inclusion step; `min(tau) / 10` when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub h: Option<f64>,
    #[serde(default = "default_mode")]
    pub mode: ModeConfig,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default = "default_nodes")]
    pub edi_nodes: usize,
    #[serde(default = "default_edi_tolerance")]
    pub edi_tolerance: f64,
    #[serde(default = "default_samples")]
    pub samples: usize,
    #[serde(default)]
    pub halt_on_source: bool,
}

fn default_mode() -> ModeConfig {
    ModeConfig::Exact
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

fn default_nodes() -> usize {
    8
}

fn default_edi_tolerance() -> f64 {
    1e-5
}

fn default_samples() -> usize {
    400
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ReferenceKind {
    /// Closed form when one is known, inclusion integrator otherwise.
    Auto,
    ClosedForm,
    Inclusion,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReferenceConfig {
    pub kind: ReferenceKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FieldKind {
    Example,
    Saddle,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassifyConfig {
    pub field: FieldKind,
    #[serde(default = "default_points")]
    pub points: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub radius: Option<f64>,
    #[serde(default = "default_probe")]
    pub probe: f64,
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
}

fn default_points() -> usize {
    360
}

fn default_probe() -> f64 {
    1e-6
}

fn default_tolerance() -> f64 {
    1e-8
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NormsConfig {
    pub vectors: Vec<Vec<f64>>,
}

impl RunConfig {
    pub fn from_toml_str(text: &str, origin: &Path) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| HarnessError::Parse {
            path: origin.to_path_buf(),
            message: e.to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("run configs always serialise")
    }

    /// Hex SHA-256 of the canonical serialisation.
    pub fn hash(&self) -> String {
        Sha256::digest(self.to_toml_string().as_bytes())
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        let dim = self.dim()?;
        let tau = &self.run.tau;
        if tau.is_empty() {
            return Err(HarnessError::invalid("run.tau", "needs at least one time step"));
        }
        for (k, t) in tau.iter().enumerate() {
            if !(*t > 0.0 && t.is_finite()) {
                return Err(HarnessError::invalid(format!("run.tau[{k}]"), format!("must be positive, got {t}")));
            }
        }
        if tau.windows(2).any(|w| w[1] >= w[0]) {
            return Err(HarnessError::invalid("run.tau", "values must be strictly decreasing"));
        }
        positive("run.end_time", self.run.end_time)?;
        if let Some(h) = self.run.h {
            positive("run.h", h)?;
        }
        if self.run.edi_nodes == 0 {
            return Err(HarnessError::invalid("run.edi_nodes", "must be at least 1"));
        }
        positive("run.edi_tolerance", self.run.edi_tolerance)?;
        if self.run.samples < 2 {
            return Err(HarnessError::invalid("run.samples", "must be at least 2"));
        }
        if let Some(tol) = self.glide.tie_tolerance {
            if !(0.0..1.0).contains(&tol) {
                return Err(HarnessError::invalid("glide.tie_tolerance", "must lie in [0, 1)"));
            }
        }
        if let Some(l) = self.energy.lipschitz {
            positive("energy.lipschitz", l)?;
        }
        if let Some(c) = &self.energy.center {
            if c.len() != dim {
                return Err(HarnessError::invalid(
                    "energy.center",
                    format!("has {} coordinates, positions have {dim}", c.len()),
                ));
            }
        }
        if let Some(b) = &self.initial.burgers {
            if b.len() != self.initial.positions.len() {
                return Err(HarnessError::invalid(
                    "initial.burgers",
                    format!("{} entries for {} positions", b.len(), self.initial.positions.len()),
                ));
            }
        }
        if let Some(c) = &self.classify {
            if c.points == 0 {
                return Err(HarnessError::invalid("classify.points", "must be at least 1"));
            }
            positive("classify.probe", c.probe)?;
            positive("classify.tolerance", c.tolerance)?;
            if let Some(r) = c.radius {
                positive("classify.radius", r)?;
            }
        }
        if let Some(n) = &self.norms {
            for (k, v) in n.vectors.iter().enumerate() {
                if v.len() != self.glide_system()?.dim() {
                    return Err(HarnessError::invalid(
                        format!("norms.vectors[{k}]"),
                        "dimension differs from the glide system",
                    ));
                }
            }
        }
        self.glide_system()?;
        self.configuration()?;
        self.energy_model()?;
        Ok(())
    }

    fn dim(&self) -> Result<usize> {
        let first = self
            .initial
            .positions
            .first()
            .ok_or_else(|| HarnessError::invalid("initial.positions", "needs at least one particle"))?;
        for (k, p) in self.initial.positions.iter().enumerate() {
            if p.len() != first.len() || p.is_empty() {
                return Err(HarnessError::invalid(
                    format!("initial.positions[{k}]"),
                    "all positions need the same positive dimension",
                ));
            }
        }
        Ok(first.len())
    }

    pub fn glide_system(&self) -> Result<GlideSystem> {
        let g = &self.glide;
        let tol = g.tie_tolerance.unwrap_or(DEFAULT_TIE_TOLERANCE);
        let sys = match g.preset {
            GlidePreset::Square => GlideSystem::square(),
            GlidePreset::Hexagonal => GlideSystem::hexagonal(),
            GlidePreset::Regular => {
                let pairs = g
                    .pairs
                    .ok_or_else(|| HarnessError::invalid("glide.pairs", "required for the regular preset"))?;
                if pairs < 2 {
                    return Err(HarnessError::invalid("glide.pairs", "needs at least two pairs"));
                }
                GlideSystem::regular(pairs)
            }
            GlidePreset::Custom => {
                let rows = g
                    .directions
                    .as_ref()
                    .ok_or_else(|| HarnessError::invalid("glide.directions", "required for the custom preset"))?;
                GlideSystem::from_rows(rows, tol).map_err(|e| HarnessError::invalid("glide.directions", e.to_string()))?
            }
        };
        Ok(sys.with_tie_tolerance(tol))
    }

    pub fn configuration(&self) -> Result<Configuration> {
        let positions: Vec<Vector> = self.initial.positions.iter().map(|p| vector(p)).collect();
        let burgers = self
            .initial
            .burgers
            .clone()
            .unwrap_or_else(|| vec![1; positions.len()]);
        Configuration::new(positions, burgers).map_err(|e| HarnessError::invalid("initial", e.to_string()))
    }

    fn center(&self) -> Result<Vector> {
        let dim = self.dim()?;
        Ok(self
            .energy
            .center
            .as_ref()
            .map(|c| vector(c))
            .unwrap_or_else(|| Vector::zeros(dim)))
    }

    pub fn energy_model(&self) -> Result<Box<dyn EnergyModel>> {
        let e = &self.energy;
        let center = self.center()?;
        Ok(match e.model {
            ModelKind::QuadraticWell => Box::new(QuadraticWell::new(center)),
            ModelKind::Constant => Box::new(ConstantEnergy {
                level: e.level.unwrap_or(0.0),
            }),
            ModelKind::Saddle => Box::new(
                SaddleEnergy::new(e.scale.unwrap_or(2.0)).map_err(|err| HarnessError::invalid("energy.scale", err.to_string()))?,
            ),
            ModelKind::Screw => {
                let need = |v: Option<f64>, name: &str| {
                    v.ok_or_else(|| HarnessError::invalid(format!("energy.{name}"), "required for the screw model"))
                };
                let mut params = ScrewEnergyParams::new(
                    need(e.epsilon, "epsilon")?,
                    center,
                    need(e.confinement_radius, "confinement_radius")?,
                    need(e.confinement_stiffness, "confinement_stiffness")?,
                )
                .map_err(|err| HarnessError::invalid("energy", err.to_string()))?;
                if let Some(d) = e.domain_radius {
                    params.domain_radius = d;
                }
                Box::new(ScrewEnergy::new(params).map_err(|err| HarnessError::invalid("energy", err.to_string()))?)
            }
        })
    }

    pub fn force_field(&self) -> Option<Box<dyn ForceField>> {
        self.classify.as_ref().map(|c| -> Box<dyn ForceField> {
            match c.field {
                FieldKind::Example => Box::new(ExampleField),
                FieldKind::Saddle => Box::new(SaddleField),
            }
        })
    }

    /// Configured bound, or the sampled estimate around the initial state.
    pub fn lipschitz(&self, model: &dyn EnergyModel) -> Result<f64> {
        if let Some(l) = self.energy.lipschitz {
            return Ok(l);
        }
        let z0 = self.configuration()?;
        let l = estimate_lipschitz(model, &z0, 1.0, LIPSCHITZ_SAMPLES, self.run.seed);
        // constant energies have no force at all
        Ok(if l > 0.0 { l } else { 1.0 })
    }

    /// Inclusion step.
    pub fn inclusion_step(&self) -> f64 {
        self.run.h.unwrap_or_else(|| {
            self.run.tau.iter().copied().fold(f64::INFINITY, f64::min) / 10.0
        })
    }

    pub fn reference_kind(&self) -> ReferenceKind {
        self.reference.as_ref().map_or(ReferenceKind::Auto, |r| r.kind)
    }
}

fn positive(field: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(HarnessError::invalid(field, format!("must be positive, got {v}")))
    }
}

pub fn load_config(path: &Path) -> Result<RunConfig> {
    let text = fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
    RunConfig::from_toml_str(&text, path)
}

pub fn save_config(cfg: &RunConfig, path: &Path) -> Result<()> {
    fs::write(path, cfg.to_toml_string()).map_err(|e| HarnessError::io(path, e))
}

/// Bundled scenarios.
pub mod scenarios {
    use super::*;

    fn base(model: EnergyConfig, positions: Vec<Vec<f64>>, burgers: Option<Vec<i8>>, end_time: f64) -> RunConfig {
        RunConfig {
            glide: GlideConfig {
                preset: GlidePreset::Square,
                pairs: None,
                directions: None,
                tie_tolerance: None,
            },
            energy: model,
            initial: InitialConfig { positions, burgers },
            run: RunSection {
                tau: vec![0.04, 0.02, 0.01, 0.005],
                end_time,
                h: None,
                mode: ModeConfig::Exact,
                seed: 0,
                output_dir: default_output_dir(),
                edi_nodes: default_nodes(),
                edi_tolerance: default_edi_tolerance(),
                samples: default_samples(),
                halt_on_source: false,
            },
            reference: None,
            classify: None,
            norms: None,
        }
    }

    fn empty_energy(model: ModelKind) -> EnergyConfig {
        EnergyConfig {
            model,
            center: Some(vec![0.0, 0.0]),
            epsilon: None,
            confinement_radius: None,
            confinement_stiffness: None,
            domain_radius: None,
            scale: None,
            level: None,
            lipschitz: None,
        }
    }

    /// One defect in a quadratic well, started off the diagonal so that it
    /// glides, hits the tie line and then slides along it.
    pub fn quadratic_well() -> RunConfig {
        base(
            empty_energy(ModelKind::QuadraticWell),
            vec![vec![-2.0, -1.0]],
            None,
            2.0,
        )
    }

    /// Two like-signed screw dislocations placed symmetrically about the centre.
    pub fn two_dislocations() -> RunConfig {
        let mut energy = empty_energy(ModelKind::Screw);
        energy.epsilon = Some(0.05);
        energy.confinement_radius = Some(1.0);
        energy.confinement_stiffness = Some(10.0);
        let mut cfg = base(
            energy,
            vec![vec![0.25, 0.25], vec![-0.25, -0.25]],
            Some(vec![1, 1]),
            1.0,
        );
        cfg.run.tau = vec![0.02, 0.01];
        cfg
    }

    /// Circle scan of the planar example field.
    pub fn example_field_scan() -> RunConfig {
        let mut cfg = quadratic_well();
        cfg.classify = Some(ClassifyConfig {
            field: FieldKind::Example,
            points: default_points(),
            radius: None,
            probe: default_probe(),
            tolerance: default_tolerance(),
        });
        cfg
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scenarios_validate() {
        scenarios::quadratic_well().validate().unwrap();
        scenarios::two_dislocations().validate().unwrap();
        scenarios::example_field_scan().validate().unwrap();
    }

    #[test]
    fn round_trip() {
        for cfg in [scenarios::quadratic_well(), scenarios::two_dislocations(), scenarios::example_field_scan()] {
            let text = cfg.to_toml_string();
            let back = RunConfig::from_toml_str(&text, Path::new("mem")).unwrap();
            assert_eq!(back, cfg);
            assert_eq!(back.hash(), cfg.hash());
        }
    }

    #[test]
    fn empty_tau_list_is_rejected() {
        let mut cfg = scenarios::quadratic_well();
        cfg.run.tau.clear();
        match cfg.validate() {
            Err(HarnessError::Invalid { field, .. }) => assert_eq!(field, "run.tau"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn increasing_tau_is_rejected() {
        let mut cfg = scenarios::quadratic_well();
        cfg.run.tau = vec![0.01, 0.02];
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let text = scenarios::quadratic_well().to_toml_string() + "\n[extra]\nx = 1\n";
        assert!(matches!(
            RunConfig::from_toml_str(&text, Path::new("mem")),
            Err(HarnessError::Parse { .. })
        ));
    }

    #[test]
    fn screw_model_needs_its_parameters() {
        let mut cfg = scenarios::two_dislocations();
        cfg.energy.epsilon = None;
        match cfg.validate() {
            Err(HarnessError::Invalid { field, .. }) => assert_eq!(field, "energy.epsilon"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn hash_tracks_content() {
        let a = scenarios::quadratic_well();
        let mut b = a.clone();
        b.run.seed = 1;
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 64);
    }
}
