use std::path::Path;

use pancstudy::cohort::{read_manifest, write_manifest, CaseRecord};
use pancstudy::harmonize::RecipeBook;
use pancstudy::nifti::{read_label_volume, write_label_volume_auto};
use pancstudy::phantom::{harmonization_pair, ModelProfile, StudySpec};
use pancstudy::pipeline::{self, RunConfig};
use pancstudy::scheme::Schemes;
use pancstudy::study::run_study;
use pancstudy::volume::validate_against_scheme;

const SPEC: &str = include_str!("../data/phantom_study.toml");

fn small_spec(n: usize) -> StudySpec {
    let mut spec = StudySpec::from_toml(SPEC).unwrap();
    spec.n_cases = n;
    spec.profiles[1].drop_cases.retain(|&c| c < n);
    spec
}

fn read(p: &Path) -> Vec<u8> {
    std::fs::read(p).unwrap()
}

#[test]
fn phantom_evaluate_stats_chain() {
    let dir = tempfile::tempdir().unwrap();
    let spec = small_spec(16);
    let (generated, cfg_path) = pipeline::cmd_phantom(&spec, dir.path()).unwrap();
    assert_eq!(generated.cases.len(), 16);

    let cfg = RunConfig::load(&cfg_path).unwrap();
    let eval = pipeline::cmd_evaluate(&cfg).unwrap();
    assert!(eval.report.failed.is_empty());
    assert_eq!(eval.metrics.len(), 16 * 3);
    let failures: Vec<usize> = ["TS", "REF_8", "ALL_45"]
        .iter()
        .map(|m| eval.metrics.iter().filter(|r| r.model_id == *m && !r.detected).count())
        .collect();
    assert_eq!(failures, vec![0, 3, 0]);
    assert!(eval.metrics.iter().filter(|r| r.model_id == "TS").all(|r| r.dsc == Some(1.0)));

    let models: Vec<String> = cfg.models.iter().map(|m| m.name.clone()).collect();
    let study = pipeline::cmd_stats(&eval.metrics_path, &cfg.out, &models).unwrap();
    assert_eq!(study, run_study(&eval.metrics, &models).unwrap());
    let json = read(&cfg.out.join(pipeline::STUDY_FILE));
    let report = pipeline::cmd_report(cfg.out.join(pipeline::STUDY_FILE)).unwrap();
    assert!(report.contains("TS vs. REF_8"));

    // Rerun into a second directory: identical bytes.
    let dir2 = tempfile::tempdir().unwrap();
    let (_, cfg2_path) = pipeline::cmd_phantom(&spec, dir2.path()).unwrap();
    let cfg2 = RunConfig::load(&cfg2_path).unwrap();
    for case in &generated.cases {
        let name = format!("{}.nii.gz", case.case_id);
        assert_eq!(read(&dir.path().join("REF_8").join(&name)), read(&dir2.path().join("REF_8").join(&name)));
    }
    let mut cfg2 = cfg2;
    cfg2.jobs = Some(1);
    let eval2 = pipeline::cmd_evaluate(&cfg2).unwrap();
    assert_eq!(read(&eval.metrics_path), read(&eval2.metrics_path));
    pipeline::cmd_stats(&eval2.metrics_path, &cfg2.out, &models).unwrap();
    assert_eq!(json, read(&cfg2.out.join(pipeline::STUDY_FILE)));
}

#[test]
fn identical_models_render_unit_p_values() {
    let dir = tempfile::tempdir().unwrap();
    let mut spec = small_spec(6);
    spec.profiles = vec![ModelProfile::exact("A"), ModelProfile::exact("B"), ModelProfile::exact("C")];
    let (_, cfg_path) = pipeline::cmd_phantom(&spec, dir.path()).unwrap();
    let cfg = RunConfig::load(&cfg_path).unwrap();
    let eval = pipeline::cmd_evaluate(&cfg).unwrap();
    assert!(eval.metrics.iter().all(|m| m.dsc == Some(1.0) && m.hd_mm == Some(0.0)));
    let study = pipeline::cmd_stats(&eval.metrics_path, &cfg.out, &[]).unwrap();
    let table = study.pairwise_table();
    assert_eq!(table.matches("1.000").count(), 9, "{table}");
}

#[test]
fn grid_mismatch_fails_the_case() {
    let dir = tempfile::tempdir().unwrap();
    let (_, cfg_path) = pipeline::cmd_phantom(&small_spec(3), dir.path()).unwrap();
    let mut cfg = RunConfig::load(&cfg_path).unwrap();
    let victim = dir.path().join("TS").join("case_0001.nii.gz");
    let (vol, _) = read_label_volume(&victim).unwrap();
    let mut grid = *vol.grid();
    grid.spacing[0] *= 2.0;
    write_label_volume_auto(&pancstudy::LabelVolume::new(grid, vol.into_voxels()).unwrap(), &victim).unwrap();
    let eval = pipeline::cmd_evaluate(&cfg).unwrap();
    assert_eq!(eval.report.failed.len(), 1);
    assert_eq!(eval.metrics.len(), 2 * 3);
    cfg.strict = true;
    assert_eq!(pipeline::cmd_evaluate(&cfg).unwrap().report.exit_code(cfg.strict), 1);
}

fn harmonize_fixture(dir: &Path, n: usize) -> RunConfig {
    let mut cases = Vec::new();
    for i in 0..n {
        let (pan, ts) = harmonization_pair(5 + i, i as u64).unwrap();
        let (pp, tp) = (dir.join(format!("p{i}.nii.gz")), dir.join(format!("t{i}.nii.gz")));
        write_label_volume_auto(&pan, &pp).unwrap();
        write_label_volume_auto(&ts, &tp).unwrap();
        cases.push(CaseRecord {
            case_id: format!("h{i}"),
            pdac: i % 2 == 1,
            paths: vec![("panorama".into(), pp), ("ts".into(), tp)],
        });
    }
    let manifest = dir.join("sources.csv");
    write_manifest(&cases, &manifest, Some(dir)).unwrap();
    RunConfig::new(manifest, dir.join("out"))
}

#[test]
fn harmonize_outputs_validate_and_are_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = harmonize_fixture(dir.path(), 3);
    let out = pipeline::cmd_harmonize(&cfg).unwrap();
    assert_eq!(out.report.succeeded, 3);
    let schemes = Schemes::builtin();
    let produced = read_manifest(&out.manifest).unwrap();
    assert_eq!(produced.len(), 3);
    let mut first = Vec::new();
    for case in &produced {
        for (col, scheme) in [("ref_8", schemes.ref8()), ("all_45", schemes.all45())] {
            let path = case.path(col).unwrap();
            let (vol, _) = read_label_volume(path).unwrap();
            assert!(validate_against_scheme(&vol, scheme).is_ok());
            first.push(read(path));
        }
    }
    let rules = std::fs::read_to_string(cfg.out.join("harmonized/rules.csv")).unwrap();
    assert_eq!(rules.lines().count(), 1 + 3 * 2 * RecipeBook::builtin().recipe("REF_8").unwrap().rules.len());

    pipeline::cmd_harmonize(&cfg).unwrap();
    let again: Vec<Vec<u8>> = produced
        .iter()
        .flat_map(|c| [read(c.path("ref_8").unwrap()), read(c.path("all_45").unwrap())])
        .collect();
    assert_eq!(first, again);
}

#[test]
fn corrupt_input_is_skipped_in_lenient_mode() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = harmonize_fixture(dir.path(), 3);
    std::fs::write(dir.path().join("t1.nii.gz"), b"not a nifti file").unwrap();
    let out = pipeline::cmd_harmonize(&cfg).unwrap();
    assert_eq!(out.report.succeeded, 2);
    assert_eq!(out.report.failed[0].0, "h1");
    assert_eq!(out.report.exit_code(cfg.strict), 0);
    cfg.strict = true;
    assert_eq!(pipeline::cmd_harmonize(&cfg).unwrap().report.exit_code(cfg.strict), 1);
    assert_eq!(read_manifest(&out.manifest).unwrap().len(), 2);
}

#[test]
fn cohort_command_balances() {
    let dir = tempfile::tempdir().unwrap();
    let cases: Vec<CaseRecord> = (0..40)
        .map(|i| CaseRecord {
            case_id: format!("c{i}"),
            pdac: i < 12,
            paths: vec![("ct".into(), dir.path().join(format!("c{i}.nii.gz")))],
        })
        .collect();
    let m = dir.path().join("all.csv");
    write_manifest(&cases, &m, Some(dir.path())).unwrap();
    let out = dir.path().join("sub/balanced.csv");
    let a = pipeline::cmd_cohort(&m, 3, &out).unwrap();
    assert_eq!(a.len(), 24);
    assert_eq!(read_manifest(&out).unwrap(), a);
    assert_eq!(pipeline::cmd_cohort(&m, 3, &out).unwrap(), a);
}

#[test]
fn binary_runs_the_whole_chain() {
    let dir = tempfile::tempdir().unwrap();
    let spec_path = dir.path().join("spec.toml");
    std::fs::write(&spec_path, SPEC.replace("n_cases = 50", "n_cases = 10")).unwrap();
    let bin = env!("CARGO_BIN_EXE_pancstudy");
    let run = |args: &[&str]| {
        let out = std::process::Command::new(bin)
            .args(args)
            .env("RUST_LOG", "warn")
            .env_remove("PANCSTUDY_MANIFEST")
            .env_remove("PANCSTUDY_OUT")
            .output()
            .unwrap();
        assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
        String::from_utf8(out.stdout).unwrap()
    };
    let study = dir.path().join("study");
    run(&["phantom", spec_path.to_str().unwrap(), "--out", study.to_str().unwrap()]);
    let cfg = study.join("run.toml");
    let cfg = cfg.to_str().unwrap();
    run(&["evaluate", "--config", cfg, "--jobs", "2", "--hd-policy", "impute-diagonal"]);
    let tables = run(&["stats", "--config", cfg]);
    assert!(tables.contains("Detection failure (n)"));
    let report = run(&["report", study.join("results/study.json").to_str().unwrap()]);
    assert!(report.starts_with(&tables));
}
