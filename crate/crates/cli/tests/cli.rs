use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use otrepair::datagen::{sample_mixture, MixtureSpec};
use otrepair::io::write_dataset_csv;
use otrepair::repair::default_feature_names;

fn otrepair(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_otrepair")).args(args).output().unwrap()
}

fn ok(args: &[&str]) {
    let out = otrepair(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

struct Fixture {
    dir: tempfile::TempDir,
}

impl Fixture {
    fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        let mut spec = MixtureSpec::reference(51);
        spec.n_archive = 3000;
        let (research, archive) = sample_mixture(&spec).unwrap();
        let names = default_feature_names(2);
        write_dataset_csv(&research, &names, fs::File::create(dir.path().join("research.csv")).unwrap()).unwrap();
        write_dataset_csv(&archive, &names, fs::File::create(dir.path().join("archive.csv")).unwrap()).unwrap();
        fs::write(
            dir.path().join("schema.toml"),
            "features = [\"x1\", \"x2\"]\nsensitive = { column = \"s\" }\nunprotected = { column = \"u\" }\n",
        )
        .unwrap();
        Self { dir }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn design(&self) -> PathBuf {
        let model = self.path("model.json");
        ok(&[
            "design",
            "--research",
            p(&self.path("research.csv")),
            "--schema",
            p(&self.path("schema.toml")),
            "--nq",
            "50",
            "--seed",
            "51",
            "--out",
            p(&model),
        ]);
        model
    }

    fn repair(&self, model: &Path, seed: &str, out: &str, batch: &str) -> Vec<u8> {
        let out = self.path(out);
        ok(&[
            "repair",
            "--model",
            p(model),
            "--input",
            p(&self.path("archive.csv")),
            "--seed",
            seed,
            "--out",
            p(&out),
            "--report",
            p(&self.path("report.json")),
            "--batch-size",
            batch,
        ]);
        fs::read(out).unwrap()
    }
}

#[test]
fn repair_is_byte_identical_across_runs_and_batch_sizes() {
    let fx = Fixture::new();
    let model = fx.design();
    let a = fx.repair(&model, "7", "a.csv", "8192");
    let b = fx.repair(&model, "7", "b.csv", "8192");
    let c = fx.repair(&model, "7", "c.csv", "97");
    let d = fx.repair(&model, "8", "d.csv", "8192");
    assert_eq!(a, b);
    assert_eq!(a, c);
    assert_ne!(a, d);
}

#[test]
fn repair_appends_columns_and_keeps_rows() {
    let fx = Fixture::new();
    let model = fx.design();
    let out = String::from_utf8(fx.repair(&model, "1", "out.csv", "500")).unwrap();
    let input = fs::read_to_string(fx.path("archive.csv")).unwrap();
    let mut lines = out.lines();
    assert_eq!(lines.next().unwrap(), "x1,x2,s,u,x1_repaired,x2_repaired");
    let mut rows = 0;
    for (o, i) in lines.zip(input.lines().skip(1)) {
        assert!(o.starts_with(&format!("{i},")));
        let fields: Vec<&str> = o.split(',').collect();
        assert_eq!(fields.len(), 6);
        fields[4].parse::<f64>().unwrap();
        rows += 1;
    }
    assert_eq!(rows, 3000);
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(fx.path("report.json")).unwrap()).unwrap();
    assert_eq!(report["rows_repaired"], 3000);
}

#[test]
fn missing_values_pass_through_unrepaired() {
    let fx = Fixture::new();
    let model = fx.design();
    let input = fx.path("gappy.csv");
    fs::write(&input, "x1,x2,s,u\n0.5,0.5,0,0\n?,1.0,1,1\n-0.2,0.3,1,0\n").unwrap();
    let out = fx.path("gappy_out.csv");
    ok(&["repair", "--model", p(&model), "--input", p(&input), "--seed", "3", "--out", p(&out)]);
    let text = fs::read_to_string(out).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 4);
    assert_eq!(lines[2], "?,1.0,1,1,,");
    assert!(!lines[1].ends_with(",,") && !lines[3].ends_with(",,"));
}

#[test]
fn evaluate_reports_lower_e_after_repair() {
    let fx = Fixture::new();
    let model = fx.design();
    fx.repair(&model, "2", "rep.csv", "8192");
    let repaired_schema = fx.path("repaired.toml");
    fs::write(
        &repaired_schema,
        "features = [\"x1_repaired\", \"x2_repaired\"]\nsensitive = { column = \"s\" }\nunprotected = { column = \"u\" }\n",
    )
    .unwrap();
    let e = |input: &Path, schema: &Path, out: &str| {
        let out = fx.path(out);
        ok(&["evaluate", "--input", p(input), "--schema", p(schema), "--out", p(&out)]);
        let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(out).unwrap()).unwrap();
        v["total"].as_f64().unwrap()
    };
    let before = e(&fx.path("archive.csv"), &fx.path("schema.toml"), "before.json");
    let after = e(&fx.path("rep.csv"), &repaired_schema, "after.json");
    assert!(after < before / 4.0, "{after} vs {before}");
}

#[test]
fn geometric_baseline_writes_dataset() {
    let fx = Fixture::new();
    let out = fx.path("geo.csv");
    ok(&[
        "baseline-geometric",
        "--research",
        p(&fx.path("research.csv")),
        "--schema",
        p(&fx.path("schema.toml")),
        "--out",
        p(&out),
    ]);
    let text = fs::read_to_string(out).unwrap();
    assert_eq!(text.lines().next().unwrap(), "x1,x2,s,u");
    assert_eq!(text.lines().count(), 501);
}

const SIM_CONFIG: &str = r#"
[population]
means = [[-1.0, -1.0], [0.0, 0.0], [1.0, 1.0], [0.0, 0.0]]
p_u0 = 0.5
p_s0_given_u = [0.3, 0.1]
n_research = 100
n_archive = 300
seed = 5
"#;

#[test]
fn simulate_and_sweep_tables() {
    let fx = Fixture::new();
    let config = fx.path("sim.toml");
    fs::write(&config, SIM_CONFIG).unwrap();
    let table = fx.path("table.csv");
    ok(&["simulate", "--spec", p(&config), "--replications", "2", "--out", p(&table)]);
    let text = fs::read_to_string(&table).unwrap();
    assert_eq!(text.lines().count(), 4);
    assert!(text.starts_with("variant,research_k1_mean"));

    let curve = fx.path("curve.csv");
    ok(&[
        "sweep",
        "--spec",
        p(&config),
        "--variable",
        "nQ",
        "--grid",
        "10,20,30",
        "--replications",
        "2",
        "--out",
        p(&curve),
    ]);
    let text = fs::read_to_string(&curve).unwrap();
    assert_eq!(text.lines().count(), 4);
    assert!(text.lines().nth(3).unwrap().starts_with("nQ,30,"));
}

#[test]
fn failures_exit_nonzero_with_error_class() {
    let fx = Fixture::new();
    let model = fx.design();
    let text = fs::read_to_string(&model).unwrap();
    let broken = fx.path("broken.json");
    fs::write(&broken, &text[..text.len() / 3]).unwrap();
    let out = otrepair(&[
        "repair",
        "--model",
        p(&broken),
        "--input",
        p(&fx.path("archive.csv")),
        "--seed",
        "1",
        "--out",
        p(&fx.path("never.csv")),
    ]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("error[corrupt-model]"));
    assert!(!fx.path("never.csv").exists());

    let versioned = fx.path("v9.json");
    fs::write(&versioned, text.replacen("\"format_version\": 1", "\"format_version\": 9", 1)).unwrap();
    let out = otrepair(&["repair", "--model", p(&versioned), "--input", p(&fx.path("archive.csv")), "--seed", "1", "--out", p(&fx.path("never.csv"))]);
    assert!(String::from_utf8_lossy(&out.stderr).contains("error[version-mismatch]"));

    let one_cell = fx.path("one_cell.csv");
    fs::write(&one_cell, "x1,x2,s,u\n0,1,0,0\n1,2,1,0\n2,0,0,0\n").unwrap();
    let out = otrepair(&[
        "design",
        "--research",
        p(&one_cell),
        "--schema",
        p(&fx.path("schema.toml")),
        "--out",
        p(&fx.path("m.json")),
    ]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("error[empty-cell]"));
}
