//! Run manifests: a JSON file naming models, scenario files and parameter
//! overrides. Relative paths are resolved against the manifest's directory.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use cornerpose::estimator::EstimatorConfig;
use cornerpose::geometry::CameraIntrinsics;
use cornerpose::sim::{NoiseModel, PoseSampler};
use serde::Deserialize;

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunManifest {
    pub models: Vec<ModelEntry>,
    pub scenarios: Option<PathBuf>,
    pub poses: Option<PathBuf>,
    pub output_dir: Option<PathBuf>,
    pub seed: Option<u64>,
    pub simulate: SimulateSettings,
    /// Partial estimator configuration; missing fields keep their defaults.
    pub estimator: Option<EstimatorConfig>,
    /// Random segments added to synthetic edge images.
    pub edge_clutter: Option<usize>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelEntry {
    pub path: PathBuf,
    pub id: Option<String>,
    #[serde(default)]
    pub symmetric: bool,
    /// Restricts estimation to these corner indices.
    pub corners: Option<Vec<usize>>,
    pub sharp_angle_tol: Option<f64>,
    pub ortho_tol: Option<f64>,
    pub scale_fraction: Option<f64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateSettings {
    /// Scenarios per model.
    pub count: Option<usize>,
    pub noise: Option<NoiseModel>,
    pub sampler: Option<PoseSampler>,
    pub intrinsics: Option<CameraIntrinsics>,
}

impl RunManifest {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("cannot read manifest {}", path.display()))?;
        let mut m: RunManifest = serde_json::from_str(&text)
            .with_context(|| format!("invalid manifest {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        m.resolve(base);
        m.validate()?;
        Ok(m)
    }

    fn resolve(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        for e in &mut self.models {
            fix(&mut e.path);
        }
        for p in [&mut self.scenarios, &mut self.poses, &mut self.output_dir]
            .into_iter()
            .flatten()
        {
            fix(p);
        }
    }

    fn validate(&self) -> Result<()> {
        for e in &self.models {
            if !e.path.is_file() {
                bail!("model file {} does not exist", e.path.display());
            }
        }
        if let Some(noise) = &self.simulate.noise {
            noise.validate().map_err(anyhow::Error::msg)?;
        }
        if let Some(k) = &self.simulate.intrinsics {
            k.validate()?;
        }
        if let Some(cfg) = &self.estimator {
            cfg.validate()?;
        }
        if let Some(dir) = &self.output_dir {
            std::fs::create_dir_all(dir)
                .with_context(|| format!("output directory {} is not writable", dir.display()))?;
        }
        Ok(())
    }
}
