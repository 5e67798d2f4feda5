#![allow(dead_code)]

use std::path::Path;

use faithtune::datagen::{run_pipeline, PipelineRequest, QualityPolicy};
use faithtune::model::{load_contrastive_dataset, ContrastiveSample};
use faithtune::synth::write_synthetic_squad;
use faithtune::teacher::{Teacher, TeacherConfig};

/// `n` mock-teacher samples drawn from a synthetic SQuAD file under `dir`.
pub fn mock_corpus(dir: &Path, n: usize, seed: u64) -> Vec<ContrastiveSample> {
    let squad = dir.join("squad.json");
    write_synthetic_squad(&squad, n.div_ceil(6) + 20, seed).unwrap();
    let out = dir.join(format!("corpus-{n}-{seed}.jsonl"));
    let teacher = Teacher::new(TeacherConfig::mock()).unwrap();
    let req = PipelineRequest {
        squad_path: squad,
        n_samples: n,
        out_path: out.clone(),
        seed,
        max_in_flight: 4,
    };
    let report = run_pipeline(&req, &teacher, &QualityPolicy::default()).unwrap();
    assert_eq!(report.samples_out, n);
    let loaded = load_contrastive_dataset(&out).unwrap();
    assert!(loaded.rejected.is_empty());
    loaded.items
}
