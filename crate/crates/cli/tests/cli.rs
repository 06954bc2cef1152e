use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn pairgan(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pairgan"))
        .args(args)
        .env_remove("PAIRGAN_EMBEDDER")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = pairgan(args);
    assert!(
        out.status.success(),
        "{args:?} failed\nstdout:\n{}\nstderr:\n{}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn failure(args: &[&str]) -> (i32, String) {
    let out = pairgan(args);
    assert!(!out.status.success(), "{args:?} unexpectedly succeeded");
    (out.status.code().unwrap(), String::from_utf8_lossy(&out.stderr).into_owned())
}

fn tree(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for e in fs::read_dir(&dir).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.insert(p.strip_prefix(root).unwrap().to_path_buf(), fs::read(&p).unwrap());
            }
        }
    }
    out
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn gen(out: &Path, seed: &str) {
    ok(&[
        "gen-shapes", "--scenario", "circle2square", "--count", "4", "--test-count", "3", "--size", "32",
        "--seed", seed, "--out", s(out),
    ]);
}

fn write_config(dir: &Path, data: &Path, mode: &str, extra: &str) -> PathBuf {
    let path = dir.join(format!("{mode}.toml"));
    let text = format!(
        r#"mode = "{mode}"
source = "{src}"
target = "{tgt}"
output = "{mode}-run"

[train]
image_size = 32
epochs = 2
seed = 3
checkpoint_every = 1
history_capacity = 2
{extra}

[train.generator]
base_channels = 4
res_blocks = 1

[train.discriminator]
base_channels = 4
"#,
        src = s(&data.join("trainA")),
        tgt = s(&data.join("trainB")),
    );
    fs::write(&path, text).unwrap();
    path
}

#[test]
fn gen_shapes_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    gen(&a, "7");
    gen(&b, "7");
    let files = tree(&a);
    assert_eq!(files, tree(&b));
    assert_eq!(files.len(), 2 * (4 + 4 + 3 + 3) + 2);
    let (code, err) = failure(&["gen-shapes", "--scenario", "circle2star", "--out", s(&dir.path().join("c"))]);
    assert_eq!(code, 2);
    for name in ["circle2square", "circle2triangle", "square2circle", "square2triangle", "triangle2circle", "triangle2square"] {
        assert!(err.contains(name), "{err}");
    }
}

#[test]
fn train_translate_and_resume() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    gen(&data, "1");

    let cfg = write_config(dir.path(), &data, "transfiguration", "weights = { dom = 5.0 }");
    let echoed = ok(&["train", "--config", s(&cfg), "--log-every", "0"]);
    assert!(echoed.contains("dom = 0.0"), "{echoed}");
    assert!(echoed.contains("train.weights.dom set to 0"));
    let run = dir.path().join("transfiguration-run");
    let log = fs::read_to_string(run.join("losses.csv")).unwrap();
    let rows: Vec<&str> = log.lines().skip(1).collect();
    assert_eq!(rows.len(), 8);
    assert!(rows.iter().all(|r| r.split(',').nth(7) == Some("0")));

    // Resuming from the first epoch reproduces the second one exactly.
    let ckpts = run.join("checkpoints");
    let final_bytes = fs::read(ckpts.join("latest.ckpt")).unwrap();
    fs::copy(ckpts.join("epoch_0001.ckpt"), ckpts.join("latest.ckpt")).unwrap();
    ok(&["train", "--config", s(&cfg), "--resume", "--log-every", "0"]);
    assert_eq!(fs::read(ckpts.join("latest.ckpt")).unwrap(), final_bytes);
    let resumed = fs::read_to_string(run.join("losses.csv")).unwrap();
    assert_eq!(resumed.lines().count(), 1 + 8 + 4);
    assert_eq!(resumed.lines().skip(9).collect::<Vec<_>>(), rows[4..]);

    let ckpt = ckpts.join("latest.ckpt");
    let (o1, o2) = (dir.path().join("t1"), dir.path().join("t2"));
    for o in [&o1, &o2] {
        ok(&["translate", "--checkpoint", s(&ckpt), "--input", s(&data.join("testA")), "--out", s(o)]);
    }
    let out = tree(&o1);
    assert_eq!(out, tree(&o2));
    for sub in ["images", "labels", "grids"] {
        assert_eq!(out.keys().filter(|k| k.starts_with(sub)).count(), 3);
    }
    for l in 0..3 {
        let map = pairgan::io::read_label_png(&o1.join(format!("labels/{l:06}.png")), 256).unwrap();
        assert!(map.labels().iter().all(|&v| v < 2));
    }
    ok(&["translate", "--checkpoint", s(&ckpt), "--direction", "t2s", "--input", s(&data.join("testB")), "--out", s(&o1)]);
    let (_, err) = failure(&[
        "translate", "--checkpoint", s(&ckpt), "--classes", "3", "--input", s(&data.join("testA")), "--out", s(&o1),
    ]);
    assert!(err.contains("class count"), "{err}");

    // Evaluate translations against themselves and against the inputs.
    let report = ok(&["eval", "--pred", s(&o1), "--ref", s(&o1), "--metrics", "l1,ssim,fid,miou", "--out", s(&o1)]);
    assert!(report.contains("fid embedder"));
    let csv = fs::read_to_string(o1.join("report.csv")).unwrap();
    let value = |name: &str| -> f64 {
        let row = csv.lines().find(|l| l.starts_with(&format!("{name},"))).unwrap();
        row.split(',').nth(1).unwrap().parse().unwrap()
    };
    assert_eq!(value("l1"), 0.0);
    assert_eq!(value("ssim"), 1.0);
    assert!(value("fid") <= 1e-6);
    assert_eq!(value("pixel_accuracy"), 1.0);
    let masked = ok(&[
        "eval", "--pred", s(&o1), "--ref", s(&data.join("testB")), "--masks", s(&data.join("testB/labels")),
        "--metrics", "l1,ssim",
    ]);
    let l1_row = masked.lines().find(|l| l.starts_with("l1")).unwrap();
    assert_eq!(l1_row.split_whitespace().count(), 3, "{masked}");
}

#[test]
fn domain_transfer_config_zeroes_cls() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    gen(&data, "2");
    let cfg = write_config(dir.path(), &data, "domain_transfer", "epochs = 1");
    let cfg_text = fs::read_to_string(&cfg).unwrap().replace("epochs = 2\n", "");
    fs::write(&cfg, cfg_text).unwrap();
    let echoed = ok(&["train", "--config", s(&cfg), "--log-every", "0"]);
    assert!(echoed.contains("cls = 0.0"), "{echoed}");
    let log = fs::read_to_string(dir.path().join("domain_transfer-run/losses.csv")).unwrap();
    assert!(log.lines().skip(1).all(|r| r.split(',').nth(6) == Some("0")));
}

#[test]
fn train_validates_before_running() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &dir.path().join("nowhere"), "transfiguration", "");
    let (code, err) = failure(&["train", "--config", s(&cfg)]);
    assert_eq!(code, 1);
    assert!(err.contains("source"), "{err}");
    assert!(!dir.path().join("transfiguration-run").exists());

    let bad = dir.path().join("bad.toml");
    fs::write(&bad, "source = \"a\"\ntarget = \"b\"\noutput = \"c\"\n[train]\nlamda_cls = 3\n").unwrap();
    let (_, err) = failure(&["train", "--config", s(&bad)]);
    assert!(err.contains("lamda_cls"), "{err}");

    let neg = dir.path().join("neg.toml");
    fs::write(&neg, "source = \"a\"\ntarget = \"b\"\noutput = \"c\"\n[train]\nlearning_rate = -1.0\n").unwrap();
    let (_, err) = failure(&["train", "--config", s(&neg)]);
    assert!(err.contains("learning_rate"), "{err}");
}

#[test]
fn eval_requires_labels_for_segmentation() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    gen(&data, "4");
    let flat = dir.path().join("flat");
    fs::create_dir_all(&flat).unwrap();
    for f in fs::read_dir(data.join("testA/images")).unwrap() {
        let p = f.unwrap().path();
        fs::copy(&p, flat.join(p.file_name().unwrap())).unwrap();
    }
    let (_, err) = failure(&["eval", "--pred", s(&flat), "--ref", s(&data.join("testA")), "--metrics", "miou"]);
    assert!(err.contains("label maps"), "{err}");
    let report = ok(&["eval", "--pred", s(&flat), "--ref", s(&data.join("testA")), "--metrics", "l1"]);
    assert!(report.lines().any(|l| l.starts_with("l1") && l.contains("0.000000")));
    let (_, err) = failure(&["eval", "--pred", s(&flat), "--ref", s(&flat), "--metrics", "psnr"]);
    assert!(err.contains("unknown metric"));
}
