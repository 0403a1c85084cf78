#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

pub fn gmmt(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gmmt")).args(args).output().expect("spawn gmmt")
}

pub fn ok(args: &[&str]) -> String {
    let out = gmmt(args);
    assert!(
        out.status.success(),
        "gmmt {args:?} failed ({:?}):\n{}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

/// Tiny model and step budget, synthetic data under `root/data`, instance
/// files under `root/instances`.
pub fn write_config(root: &Path, seed: u64, extra: &str) -> PathBuf {
    let cfg = format!(
        r#"
seed = {seed}
out_dir = "run"

[model]
d_vis = 8
d_model = 16
n_layers_vis = 1
n_layers_lm = 1
c_total = 448

[data]
vg_dir = "data/vg"
detections_dir = "data/detections"
instances_dir = "instances"
langs = ["hi", "ml"]
stage1_cap = 16
validation = "mmt.hi.valid"

[[stages]]
stage = 1
data_mix = [["stage1", 1.0]]
max_steps = 2
batch_size = 4

[[stages]]
stage = 2
data_mix = [["stage2", 1.0]]
max_steps = 2
batch_size = 4

[[stages]]
stage = 3
data_mix = [["mmt.hi.train", 1.0], ["mmt.ml.train", 1.0]]
max_steps = 2
batch_size = 4

[generate]
max_new_tokens = 6

[sweep]
lrs = [1e-3, 1e-4]
epochs = [1]
{extra}
"#
    );
    let path = root.join("run.toml");
    std::fs::write(&path, cfg).unwrap();
    path
}

/// Synthetic data plus rendered instances for the config at `cfg`.
pub fn prepare(root: &Path, cfg: &Path) {
    let c = cfg.to_str().unwrap();
    let data = root.join("data");
    ok(&["--config", c, "--out-dir", data.to_str().unwrap(), "synth-data", "--per-split", "6"]);
    ok(&["--config", c, "prepare-data"]);
}

/// Every file under `dir`, relative path to bytes, sorted.
pub fn snapshot(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push((p.strip_prefix(dir).unwrap().to_path_buf(), std::fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}
