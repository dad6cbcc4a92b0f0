use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::policy::PolicyParameters;
use super::ppo::TrainerConfig;

pub const CHECKPOINT_FORMAT: &str = "dayahead-policy";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Where training stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct CurriculumPosition {
    /// Number of completed stages.
    pub stage: usize,
    pub timesteps: u64,
    pub episodes: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub trainer: TrainerConfig,
    pub position: CurriculumPosition,
    pub params: PolicyParameters,
}

impl Checkpoint {
    pub fn new(trainer: TrainerConfig, position: CurriculumPosition, params: PolicyParameters) -> Self {
        Self { format: CHECKPOINT_FORMAT.into(), version: CHECKPOINT_VERSION, trainer, position, params }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("checkpoint serialises")
    }

    pub fn from_json(text: &str) -> anyhow::Result<Self> {
        let ck: Checkpoint = serde_json::from_str(text)?;
        anyhow::ensure!(ck.format == CHECKPOINT_FORMAT, "not a policy checkpoint (format {:?})", ck.format);
        anyhow::ensure!(ck.version == CHECKPOINT_VERSION, "unsupported checkpoint version {}", ck.version);
        anyhow::ensure!(ck.params.all_finite(), "checkpoint contains non-finite parameters");
        Ok(ck)
    }

    pub fn save(&self, path: &Path) -> anyhow::Result<()> {
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir)?;
        }
        fs::write(path, self.to_json())?;
        Ok(())
    }

    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| anyhow::anyhow!("reading {}: {e}", path.display()))?;
        Self::from_json(&text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn json_round_trip_is_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let params = PolicyParameters::init(8, -0.5, &mut rng);
        let ck = Checkpoint::new(TrainerConfig::default(), CurriculumPosition { stage: 2, timesteps: 99, episodes: 5 }, params);
        let back = Checkpoint::from_json(&ck.to_json()).unwrap();
        assert_eq!(ck, back);
    }

    #[test]
    fn rejects_foreign_documents() {
        assert!(Checkpoint::from_json("{}").is_err());
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut ck = Checkpoint::new(TrainerConfig::default(), CurriculumPosition::default(), PolicyParameters::init(4, 0.0, &mut rng));
        ck.version = 99;
        assert!(Checkpoint::from_json(&ck.to_json()).is_err());
    }
}
