use std::path::{Path, PathBuf};

use ife_core::cli::run;
use ife_core::io::{load_model, read_json, write_json, ControllerFile, SystemFile};

fn root() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
}

/// Runs with every `models/...` argument made absolute.
fn ife(args: &str) -> (i32, String, String) {
    let argv: Vec<String> = std::iter::once("ife".to_string())
        .chain(args.split_whitespace().map(|a| {
            if a.starts_with("models/") {
                root().join(a).to_string_lossy().into_owned()
            } else {
                a.to_string()
            }
        }))
        .collect();
    let (mut out, mut err) = (Vec::new(), Vec::new());
    let code = run(argv, &mut out, &mut err);
    (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
}

const GOLDEN: &[(&str, i32, &str)] = &[
    ("entropy_example1", 0, "entropy models/example1.json"),
    ("entropy_example4", 0, "entropy models/example4.json"),
    ("entropy_example2_abstraction", 0, "entropy models/example2_abstraction.json"),
    ("entropy_scalar3_abstraction", 0, "entropy models/scalar3_abstraction.json"),
    ("det_entropy_example1_det", 0, "det entropy models/example1_det.json"),
    ("datarate_example4", 0, "datarate models/example4.json models/example4_controller.json"),
    ("datarate_example5", 0, "datarate models/example5.json models/example5_controller.json"),
    ("bound_example2", 0, "bound linear --n 1 --det 1/2 --muQ 8 --muW 6"),
    ("bound_example3", 0, "bound linear --n 1 --det 1 --muQ 2 --muW 2"),
    ("synth_scalar_example2", 0, "synth scalar --a 1/2 --w -3,3 --q -4,4"),
    ("synth_scalar_three", 0, "synth scalar --a 1 --w -1,1 --q -1.5,1.5"),
    ("frr_split", 0, "frr check models/split1.json models/example1.json models/split1_relation.json"),
    ("frr_split_bad", 1, "frr check models/split1_bad.json models/example1.json models/split1_relation.json"),
    ("system_check_example4", 0, "system check models/example4.json"),
    ("synth_codec_example1", 0, "synth codec models/example1.json"),
    ("simulate_example5", 0, "simulate models/example5.json models/example5_controller.json --x0 0 --steps 6 --seed 7"),
];

#[test]
fn golden_outputs() {
    for (name, code, args) in GOLDEN {
        let expected = std::fs::read_to_string(root().join("fixtures").join(format!("{name}.out"))).unwrap();
        let (got_code, out, err) = ife(args);
        assert_eq!(got_code, *code, "{name}: {err}");
        assert_eq!(out, expected, "{name}");
    }
}

#[test]
fn headline_lines() {
    assert!(ife("entropy models/example1.json").1.ends_with("h_inv_ub=1 exact=true\n"));
    assert_eq!(ife("bound linear --n 1 --det 1/2 --muQ 8 --muW 6").1, "h_lb=1 static_lb=1\n");
    let dr = ife("datarate models/example5.json models/example5_controller.json").1;
    assert!(dr.starts_with("R=1/1 R_tv=2/1 C0=0 (certified) admissible=true\n"));
}

#[test]
fn repeated_runs_are_identical() {
    for args in ["simulate models/example4.json models/example4_controller.json --x0 1 --steps 30 --seed 11", "entropy models/example4.json --format json"] {
        assert_eq!(ife(args), ife(args));
    }
}

#[test]
fn bundled_files_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    for entry in std::fs::read_dir(root().join("models")).unwrap() {
        let path = entry.unwrap().path();
        let name = path.file_name().unwrap().to_string_lossy().into_owned();
        if name.contains("controller") {
            let sys = load_model(&root().join("models").join(name.replace("_controller", ""))).unwrap();
            let f: ControllerFile = read_json(&path).unwrap();
            let h = sys.controller_from_file(&f).unwrap();
            let copy = dir.path().join(&name);
            write_json(&copy, &sys.controller_to_file(&h)).unwrap();
            assert_eq!(sys.controller_from_file(&read_json(&copy).unwrap()).unwrap(), h, "{name}");
        } else if read_json::<SystemFile>(&path).is_ok() {
            let m = load_model(&path).unwrap();
            let copy = dir.path().join(&name);
            write_json(&copy, &m.to_file()).unwrap();
            assert_eq!(load_model(&copy).unwrap(), m, "{name}");
        }
    }
}

#[test]
fn saved_cover_reproduces_bound() {
    let dir = tempfile::tempdir().unwrap();
    let cover = dir.path().join("cover.json");
    let (code, first, _) = ife(&format!("entropy models/example4.json --save-cover {}", cover.display()));
    assert_eq!(code, 0);
    let (code, again, _) = ife(&format!("entropy models/example4.json --cover {}", cover.display()));
    assert_eq!(code, 0);
    let last = |s: &str| s.lines().last().unwrap().split_whitespace().next().unwrap().to_string();
    assert_eq!(last(&first), last(&again));
}

#[test]
fn synthesized_controller_file_is_admissible() {
    let dir = tempfile::tempdir().unwrap();
    let ctrl = dir.path().join("h.json");
    let (code, _, err) = ife(&format!("synth codec models/example4.json --tau-max 3 --out {}", ctrl.display()));
    assert_eq!(code, 0, "{err}");
    let (code, out, _) = ife(&format!("datarate models/example4.json {}", ctrl.display()));
    assert_eq!(code, 0);
    assert!(out.lines().next().unwrap().ends_with("admissible=true"));
}

#[test]
fn exit_codes() {
    assert_eq!(ife("entropy models/missing.json").0, 2);
    assert_eq!(ife("bound linear --n 1 --det 1 --muQ 2 --muW 3").0, 2);
    assert_eq!(ife("synth scalar --a 0 --w 0,0 --q -1,1").0, 2);
    assert_eq!(ife("entropy --tau-max 0 models/example1.json").0, 2);
    assert_eq!(ife("nonsense").0, 2);
    assert_eq!(ife("--help").0, 0);
    assert_eq!(ife("det entropy models/example1.json").0, 2);
}

#[test]
fn violations_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let m = load_model(Path::new(&root().join("models/example4.json"))).unwrap();
    // Q = {0, 1} is not controlled invariant: 1 has no safe input.
    let mut f = m.to_file();
    f.q = vec!["0".into(), "1".into()];
    let path = dir.path().join("stuck.json");
    write_json(&path, &f).unwrap();
    let (code, out, _) = ife(&format!("system check {}", path.display()));
    assert_eq!(code, 1);
    assert!(out.contains("stuck=[\"1\"]"));
    assert_eq!(ife(&format!("entropy {}", path.display())).1, "h_inv_ub=inf exact=true\n");

    // always applying a sends 2 to 3
    let mut h: ControllerFile = read_json(&root().join("models/example4_controller.json")).unwrap();
    for r in &mut h.controller {
        r.input = "a".into();
    }
    let bad = dir.path().join("bad.json");
    write_json(&bad, &h).unwrap();
    let (code, out, _) = ife(&format!("datarate models/example4.json {}", bad.display()));
    assert_eq!(code, 1);
    assert!(out.contains("admissible=false"));
    assert!(out.contains("counterexample states=[\"2\", \"3\"]"));
}
