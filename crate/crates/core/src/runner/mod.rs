//! Experiment orchestration.
//!
//! An [`ExperimentConfig`] names one experiment kind with its parameters. [`run`]
//! executes it and writes the result files with a manifest. Every replication
//! draws from its own counter-based stream and results are merged in index
//! order, so outputs are byte-identical for any thread count.

mod config;
mod run;

pub use crate::rng::derive_stream;
pub use config::{ExperimentConfig, ExperimentKind, Params};
pub use run::{read_outputs, run, Manifest, RunOutcome, DEFAULT_Z};

#[cfg(test)]
mod tests {
    use super::*;

    fn instance_file(dir: &std::path::Path) -> std::path::PathBuf {
        let path = dir.join("two.json");
        std::fs::write(&path, r#"{"atoms": [{"a":1,"b":1},{"a":1,"b":1}], "actions": [[0],[1]], "alpha": 1}"#).unwrap();
        path
    }

    #[test]
    fn outputs_do_not_depend_on_thread_count() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = ExperimentConfig::new(ExperimentKind::Counterexample2, 3000, 5);
        cfg.params.dims = Some(vec![10, 20]);
        let mut outs = Vec::new();
        for jobs in [1, 4] {
            cfg.parallelism = Some(jobs);
            cfg.output = Some(dir.path().join(format!("j{jobs}")));
            run(&cfg).unwrap();
            outs.push(read_outputs(cfg.output.as_ref().unwrap()).unwrap());
        }
        // config.json differs only in the output directory and parallelism
        let strip = |v: &Vec<(String, Vec<u8>)>| v.iter().filter(|(n, _)| n != "config.json").cloned().collect::<Vec<_>>();
        assert_eq!(strip(&outs[0]), strip(&outs[1]));
    }

    #[test]
    fn manifest_hash_matches_config() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = ExperimentConfig::new(ExperimentKind::GameSolve, 1, 3);
        cfg.instance = Some(instance_file(dir.path()));
        cfg.output = Some(dir.path().join("out"));
        cfg.params.n = Some(4);
        let o = run(&cfg).unwrap();
        assert!(o.pass, "{:?}", o.failures);
        let written = ExperimentConfig::load(&dir.path().join("out/config.json")).unwrap();
        assert_eq!(written.hash().unwrap(), o.manifest.config_hash);
        let manifest: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("out/manifest.json")).unwrap()).unwrap();
        assert_eq!(manifest["config_hash"], o.manifest.config_hash);
    }

    #[test]
    fn single_replication_audit_has_no_standard_errors() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = ExperimentConfig::new(ExperimentKind::BicAudit, 1, 1);
        cfg.output = Some(dir.path().to_path_buf());
        cfg.params.offsets = Some(vec![1]);
        let o = run(&cfg).unwrap();
        assert!(o.pass);
        let csv = std::fs::read_to_string(dir.path().join("bic-audit.csv")).unwrap();
        assert!(csv.lines().skip(1).all(|l| l.split(',').nth(4) == Some("NA")));
    }

    #[test]
    fn malformed_instance_is_a_parse_error() {
        let dir = tempfile::tempdir().unwrap();
        let bad = dir.path().join("bad.json");
        std::fs::write(&bad, "{\"atoms\": [").unwrap();
        let mut cfg = ExperimentConfig::new(ExperimentKind::GameSweep, 1, 1);
        cfg.instance = Some(bad);
        cfg.output = Some(dir.path().join("out"));
        assert!(matches!(run(&cfg), Err(crate::Error::Parse(_))));
    }
}
