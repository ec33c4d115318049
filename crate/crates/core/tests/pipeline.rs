use std::process::Command;

use flowsr::config::RunConfig;
use flowsr::io::load_dataset;
use flowsr::metrics::Metric;
use flowsr::pipeline::{run_experiment, run_pipeline, PipelineFiles};

fn small(out: &std::path::Path) -> RunConfig {
    RunConfig { dims: [24, 24, 16], frames: 2, factor: [2, 2, 2], out_dir: out.to_path_buf(), ..RunConfig::default() }
}

#[test]
fn pipeline_writes_every_artifact() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small(&dir.path().join("run"));
    let (exp, files) = run_pipeline(&cfg).unwrap();
    for p in [
        &files.truth,
        &files.lr,
        &files.calibration,
        &files.sr,
        &files.baseline,
        &files.solve_report,
        &files.metrics,
        &files.summary,
        &files.effective_config,
    ] {
        assert!(p.is_file(), "{} missing", p.display());
    }
    assert_eq!(load_dataset(&files.sr).unwrap().grid().dims(), [24, 24, 16]);
    assert_eq!(load_dataset(&files.lr).unwrap().grid().dims(), [12, 12, 8]);
    assert_eq!(exp.solve_reports.len(), 2 * 3);
    // no stray temp files from the atomic writes
    let names: Vec<String> = std::fs::read_dir(&cfg.out_dir).unwrap().map(|e| e.unwrap().file_name().into_string().unwrap()).collect();
    assert!(names.iter().all(|n| !n.contains(".tmp-")), "{names:?}");
}

#[test]
fn effective_config_reruns_identically() {
    let dir = tempfile::tempdir().unwrap();
    let first = small(&dir.path().join("one"));
    run_pipeline(&first).unwrap();
    let files = PipelineFiles::in_dir(&first.out_dir);
    let mut again = RunConfig::from_text(&std::fs::read_to_string(&files.effective_config).unwrap()).unwrap();
    assert_eq!(again, first);
    again.out_dir = dir.path().join("two");
    run_pipeline(&again).unwrap();
    let files2 = PipelineFiles::in_dir(&again.out_dir);
    for (a, b) in [(&files.sr, &files2.sr), (&files.lr, &files2.lr), (&files.metrics, &files2.metrics)] {
        assert_eq!(std::fs::read(a).unwrap(), std::fs::read(b).unwrap());
    }
}

#[test]
fn helix_pipeline_improves_mean_psnr() {
    let cfg = RunConfig { phantom: flowsr::config::PhantomKind::Helix, dims: [32, 32, 32], frames: 3, ..RunConfig::default() };
    let exp = run_experiment(&cfg).unwrap();
    let mean = |method: &str| {
        let v: Vec<f64> = exp
            .report
            .records
            .iter()
            .filter(|r| r.method == method && r.metric == Metric::PsnrDb)
            .map(|r| r.value)
            .collect();
        v.iter().sum::<f64>() / v.len() as f64
    };
    assert!(mean("fsr") > mean("baseline"), "fsr {} baseline {}", mean("fsr"), mean("baseline"));
}

#[test]
fn cli_pipeline_with_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = dir.path().join("exp.cfg");
    std::fs::write(&cfg_path, "# small run\ndims = 16,16,16\nframes = 1\nfactor = 2,2,2\nseed = 4\n").unwrap();
    let out = dir.path().join("out");
    let o = Command::new(env!("CARGO_BIN_EXE_flowsr"))
        .args(["pipeline", "--config", cfg_path.to_str().unwrap(), "--set", "tau=0.5", "--out-dir", out.to_str().unwrap()])
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let eff = RunConfig::from_text(&std::fs::read_to_string(out.join("effective.cfg")).unwrap()).unwrap();
    assert_eq!(eff.tau, 0.5);
    assert_eq!(eff.seed, 4);
    assert_eq!(eff.dims, [16, 16, 16]);

    let bad = Command::new(env!("CARGO_BIN_EXE_flowsr"))
        .args(["pipeline", "--set", "factor=3,3,3", "--out-dir", out.to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(bad.status.code(), Some(2));
}
