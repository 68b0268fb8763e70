use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::StudyError;
use crate::model::ModelId;

/// One generator and the models that answer its questions.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RotationBlock {
    pub generator: ModelId,
    pub answerers: Vec<ModelId>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RotationSchedule {
    pub blocks: Vec<RotationBlock>,
}

impl RotationSchedule {
    pub fn block(&self, generator: &ModelId) -> Option<&RotationBlock> {
        self.blocks.iter().find(|b| &b.generator == generator)
    }

    /// Number of blocks in which `model` answers.
    pub fn answering_blocks(&self, model: &ModelId) -> usize {
        self.blocks.iter().filter(|b| b.answerers.contains(model)).count()
    }
}

/// Every model generates exactly one block; all other models answer it, in input order.
pub fn build_rotation_schedule(models: &[ModelId]) -> Result<RotationSchedule, StudyError> {
    if models.len() < 2 {
        return Err(StudyError::Config(format!("rotation needs at least 2 models, got {}", models.len())));
    }
    let mut seen = BTreeSet::new();
    for m in models {
        if !seen.insert(m) {
            return Err(StudyError::Config(format!("duplicate model id {m}")));
        }
    }
    Ok(RotationSchedule {
        blocks: models
            .iter()
            .map(|g| RotationBlock {
                generator: g.clone(),
                answerers: models.iter().filter(|m| *m != g).cloned().collect(),
            })
            .collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::fixtures::model;

    fn ids(names: &[&str]) -> Vec<ModelId> {
        names.iter().map(|n| model(n)).collect()
    }

    #[test]
    fn four_model_counts() {
        let models = ids(&["gpt-4", "llama", "gemini", "claude"]);
        let s = build_rotation_schedule(&models).unwrap();
        assert_eq!(s.blocks.len(), 4);
        let per_generator = 100;
        let generation_tasks = s.blocks.len() * per_generator;
        let answer_tasks: usize = s.blocks.iter().map(|b| b.answerers.len() * per_generator).sum();
        assert_eq!(generation_tasks, 400);
        assert_eq!(answer_tasks, 1200);
        for m in &models {
            assert_eq!(s.answering_blocks(m) * per_generator, 300);
            assert!(!s.block(m).unwrap().answerers.contains(m));
        }
    }

    #[test]
    fn every_pair_meets_twice_with_roles_swapped() {
        let models = ids(&["a", "b", "c", "d"]);
        let s = build_rotation_schedule(&models).unwrap();
        for x in &models {
            for y in &models {
                if x >= y {
                    continue;
                }
                let x_gen = s.blocks.iter().filter(|b| &b.generator == x && b.answerers.contains(y)).count();
                let y_gen = s.blocks.iter().filter(|b| &b.generator == y && b.answerers.contains(x)).count();
                assert_eq!((x_gen, y_gen), (1, 1));
            }
        }
    }

    #[test]
    fn small_pools() {
        let s = build_rotation_schedule(&ids(&["m1", "m2"])).unwrap();
        assert_eq!(s.blocks.len(), 2);
        assert!(s.blocks.iter().all(|b| b.answerers.len() == 1));
        let s = build_rotation_schedule(&ids(&["m1", "m2", "m3"])).unwrap();
        assert_eq!(s.blocks[0].answerers, ids(&["m2", "m3"]));
    }

    #[test]
    fn rejects_duplicates_and_singletons() {
        assert!(build_rotation_schedule(&ids(&["m1", "m1"])).is_err());
        assert!(build_rotation_schedule(&ids(&["m1"])).is_err());
    }
}
