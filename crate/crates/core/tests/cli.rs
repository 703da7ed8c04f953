use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use octsqueeze::pointcloud::{fit_quant_params, dequantize, parse_xyz_text, quantize};

fn octsqueeze(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_octsqueeze"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = octsqueeze(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn sorted_bits(text: &str) -> Vec<[u64; 3]> {
    let mut v: Vec<[u64; 3]> = parse_xyz_text(text)
        .unwrap()
        .points
        .iter()
        .map(|p| p.map(f64::to_bits))
        .collect();
    v.sort_unstable();
    v
}

#[test]
fn synth_encode_decode_eval() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    fs::write(d.join("scene.json"), r#"{"scene": {"points": 600}, "count": 2}"#).unwrap();
    ok(d, &["synth", "--config", "scene.json", "--seed", "7", "--out", "corpus"]);
    let scene = d.join("corpus/scene_0000.xyz");
    let again = tempfile::tempdir().unwrap();
    fs::write(again.path().join("scene.json"), r#"{"scene": {"points": 600}, "count": 2}"#).unwrap();
    ok(again.path(), &["synth", "--config", "scene.json", "--seed", "7", "--out", "corpus"]);
    assert_eq!(fs::read(&scene).unwrap(), fs::read(again.path().join("corpus/scene_0000.xyz")).unwrap());

    for model in ["uniform", "histogram", "parent-histogram"] {
        for mode in ["full", "early"] {
            let stats = ok(
                d,
                &["encode", "corpus/scene_0000.xyz", "--model", model, "--mode", mode, "--depth", "9", "--out", "s.ocsq"],
            );
            let bytes = fs::metadata(d.join("s.ocsq")).unwrap().len();
            assert!(stats.starts_with("bpp="), "{stats}");
            assert!(stats.contains(&format!("bytes={bytes} ")), "{stats}");
            ok(d, &["decode", "s.ocsq", "--out", "s.xyz"]);

            let original = parse_xyz_text(&fs::read_to_string(&scene).unwrap()).unwrap();
            let params = fit_quant_params(&original, 9).unwrap();
            let expected = dequantize(&quantize(&original, &params)).to_xyz_text();
            assert_eq!(sorted_bits(&fs::read_to_string(d.join("s.xyz")).unwrap()), sorted_bits(&expected));
        }
    }

    let report = ok(d, &["eval", "corpus/scene_0000.xyz", "corpus/scene_0000.xyz", "--out", "eval.json"]);
    assert!(report.contains("chamfer=0 ") && report.contains("iou=1"), "{report}");
    let json: serde_json::Value = serde_json::from_slice(&fs::read(d.join("eval.json")).unwrap()).unwrap();
    assert_eq!(json[0]["chamfer"], 0.0);
}

#[test]
fn exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    ok(d, &["synth", "--seed", "1", "--points", "300", "--out", "c"]);
    ok(d, &["encode", "c/scene_0000.xyz", "--depth", "8", "--out", "a.ocsq"]);

    let mut bytes = fs::read(d.join("a.ocsq")).unwrap();
    let mid = bytes.len() / 2;
    bytes[mid] ^= 0x10;
    fs::write(d.join("bad.ocsq"), &bytes).unwrap();
    assert_eq!(octsqueeze(d, &["decode", "bad.ocsq", "--out", "x.xyz"]).status.code(), Some(3));

    let bytes = fs::read(d.join("a.ocsq")).unwrap();
    fs::write(d.join("short.ocsq"), &bytes[..bytes.len() - 9]).unwrap();
    assert_eq!(octsqueeze(d, &["decode", "short.ocsq", "--out", "x.xyz"]).status.code(), Some(3));

    // wrong builtin model for the container
    assert_eq!(
        octsqueeze(d, &["decode", "a.ocsq", "--model", "uniform", "--out", "x.xyz"]).status.code(),
        Some(2)
    );
    fs::write(d.join("broken.xyz"), "1 2 3\n4 five 6\n").unwrap();
    let out = octsqueeze(d, &["encode", "broken.xyz", "--out", "b.ocsq"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 2"));
    assert_eq!(octsqueeze(d, &["encode", "missing.xyz", "--out", "b.ocsq"]).status.code(), Some(2));
    fs::write(d.join("empty.xyz"), "").unwrap();
    assert_eq!(octsqueeze(d, &["encode", "empty.xyz", "--out", "b.ocsq"]).status.code(), Some(2));
    assert!(!d.join("b.ocsq").exists());
    fs::write(d.join("a.bin"), [0u8; 16]).unwrap();
    assert_eq!(octsqueeze(d, &["eval", "c/scene_0000.xyz", "a.bin"]).status.code(), Some(2));
}

#[test]
fn train_then_code_with_checkpoint() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    ok(d, &["synth", "--seed", "3", "--points", "200", "--count", "3", "--out", "c"]);
    fs::write(
        d.join("train.json"),
        r#"{"train": {"steps": 6, "aggregations": 1, "eval_every": 3, "k_max": 7}}"#,
    )
    .unwrap();
    let line = ok(d, &["train", "c", "--config", "train.json", "--out", "m.ckpt"]);
    assert!(line.contains("val_bits_per_symbol="), "{line}");
    let csv = fs::read_to_string(d.join("m.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("step,train_nats,val_bits_per_symbol"));
    assert_eq!(lines.count(), 6);

    ok(d, &["train", "c", "--config", "train.json", "--out", "m2.ckpt"]);
    assert_eq!(fs::read(d.join("m.ckpt")).unwrap(), fs::read(d.join("m2.ckpt")).unwrap());

    ok(d, &["encode", "c/scene_0001.xyz", "--model", "m.ckpt", "--depth", "7", "--out", "x.ocsq"]);
    ok(d, &["decode", "x.ocsq", "--model", "m.ckpt", "--out", "x.xyz"]);
    // no checkpoint, or a different one
    assert_eq!(octsqueeze(d, &["decode", "x.ocsq", "--out", "y.xyz"]).status.code(), Some(2));
    ok(d, &["train", "c", "--config", "train.json", "--seed", "99", "--out", "other.ckpt"]);
    let out = octsqueeze(d, &["decode", "x.ocsq", "--model", "other.ckpt", "--out", "y.xyz"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("model hash mismatch"));
    // deeper than the model was trained for
    assert_eq!(
        octsqueeze(d, &["encode", "c/scene_0001.xyz", "--model", "m.ckpt", "--depth", "9", "--out", "z.ocsq"]).status.code(),
        Some(2)
    );
}

#[test]
fn rd_curve_csv() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    ok(d, &["synth", "--seed", "5", "--points", "500", "--count", "2", "--out", "c"]);
    ok(d, &["rd-curve", "c", "--depths", "6,7,8", "--out", "rd.csv"]);
    let csv = fs::read_to_string(d.join("rd.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "scene,depth,bpp,payload_bpp,chamfer,psnr,iou");
    assert_eq!(lines.len(), 1 + 3 * 2);
}
