use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use amsr_core::netpbm::{load_image, load_mask, save_image};
use amsr_core::reference::{seeded_weights, tiny_cnn, TINY_CNN_SEED};
use amsr_core::{Tensor, WeightStore};

fn amsr(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_amsr")).args(args).output().unwrap()
}

fn assets() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../assets")
}

fn asset(rel: &str) -> String {
    assets().join(rel).to_string_lossy().into_owned()
}

fn s(p: &Path) -> String {
    p.to_string_lossy().into_owned()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

#[test]
fn mask_writes_pgm_and_hfmap() {
    let dir = tempfile::tempdir().unwrap();
    let (m, hf) = (dir.path().join("m.pgm"), dir.path().join("hf.pgm"));
    let o = amsr(&[
        "mask",
        &asset("corpus/01_blocks.ppm"),
        "--strategy",
        "median",
        "--dilate",
        "3",
        "-o",
        &s(&m),
        "--hfmap",
        &s(&hf),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let mask = load_mask(&m).unwrap();
    assert_eq!((mask.height(), mask.width()), (64, 64));
    assert!(mask.count_ones() > 0);
    assert_eq!(load_image(&hf).unwrap().shape(), (3, 64, 64));
}

#[test]
fn usage_errors_exit_2() {
    assert_eq!(code(&amsr(&[])), 2);
    assert_eq!(code(&amsr(&["frobnicate"])), 2);
    assert_eq!(code(&amsr(&["sr", "x.ppm"])), 2);
    let dir = tempfile::tempdir().unwrap();
    let out = s(&dir.path().join("m.pgm"));
    let img = asset("corpus/01_blocks.ppm");
    assert_eq!(code(&amsr(&["mask", &img, "--strategy", "otsu", "-o", &out])), 2);
    assert_eq!(code(&amsr(&["mask", &img, "--dilate", "4", "-o", &out])), 2);
    assert_eq!(code(&amsr(&["--help"])), 0);
}

#[test]
fn bad_images_exit_3() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.ppm");
    std::fs::write(&bad, b"P6\n4 4\n255\n\x00\x01").unwrap();
    let out = s(&dir.path().join("o.pgm"));
    assert_eq!(code(&amsr(&["mask", &s(&bad), "-o", &out])), 3);
    assert_eq!(code(&amsr(&["mask", "/nonexistent.ppm", "-o", &out])), 3);
    let good = asset("corpus/01_blocks.ppm");
    assert_eq!(code(&amsr(&["psnr", &good, &s(&bad)])), 3);
    let small = dir.path().join("small.ppm");
    save_image(&Tensor::zeros(3, 2, 2), &small).unwrap();
    assert_eq!(code(&amsr(&["psnr", &good, &s(&small)])), 3);
}

#[test]
fn binding_problems_exit_4_and_extras_warn() {
    let dir = tempfile::tempdir().unwrap();
    let out = s(&dir.path().join("o.ppm"));
    let img = asset("corpus/02_stripes.ppm");
    let spec = asset("models/tiny-cnn.json");

    let mut extra = seeded_weights(&tiny_cnn(), TINY_CNN_SEED);
    extra.insert("spare", &[2], &[1.0, 2.0]).unwrap();
    let extra_path = dir.path().join("extra.amsrw");
    extra.save(&extra_path).unwrap();
    let o = amsr(&["sr", &img, "--model", &spec, "--weights", &s(&extra_path), "-o", &out]);
    assert_eq!(code(&o), 0);
    assert!(String::from_utf8_lossy(&o.stderr).contains("spare"));

    let mut wrong = WeightStore::new();
    let good = seeded_weights(&tiny_cnn(), TINY_CNN_SEED);
    for e in good.entries() {
        let shape = if e.name == "body.0.weight" {
            vec![16, 144, 1]
        } else {
            e.shape.clone()
        };
        wrong.insert(&e.name, &shape, good.get(&e.name).unwrap().1).unwrap();
    }
    let wrong_path = dir.path().join("wrong.amsrw");
    wrong.save(&wrong_path).unwrap();
    let o = amsr(&["sr", &img, "--model", &spec, "--weights", &s(&wrong_path), "-o", &out]);
    assert_eq!(code(&o), 4);
    assert!(String::from_utf8_lossy(&o.stderr).contains("body.0.weight"));

    let bad_spec = dir.path().join("bad.json");
    std::fs::write(&bad_spec, r#"{"name":"x","scale":7}"#).unwrap();
    let w = asset("models/tiny-cnn.amsrw");
    assert_eq!(
        code(&amsr(&[
            "sr",
            &img,
            "--model",
            &s(&bad_spec),
            "--weights",
            &w,
            "-o",
            &out
        ])),
        4
    );
    assert_eq!(
        code(&amsr(&[
            "sr",
            &img,
            "--model",
            &spec,
            "--weights",
            "/nonexistent",
            "-o",
            &out
        ])),
        4
    );
}

#[test]
fn sr_writes_upscaled_image_and_report() {
    let dir = tempfile::tempdir().unwrap();
    let (out, rep) = (dir.path().join("o.ppm"), dir.path().join("r.csv"));
    let o = amsr(&[
        "sr",
        &asset("corpus/03_noise.ppm"),
        "--model",
        &asset("models/tiny-cnn.json"),
        "--weights",
        &asset("models/tiny-cnn.amsrw"),
        "--dilate",
        "3",
        "-o",
        &s(&out),
        "--report",
        &s(&rep),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(load_image(&out).unwrap().shape(), (3, 256, 256));
    let csv = std::fs::read_to_string(&rep).unwrap();
    let lines: Vec<_> = csv.lines().collect();
    assert_eq!(lines[0], "layer,dense_macs,sparse_macs,fraction");
    assert_eq!(lines.len(), 1 + 6 + 1);
    assert!(lines[7].starts_with("total,"));
}

#[test]
fn flops_prints_table_and_csv() {
    let dir = tempfile::tempdir().unwrap();
    let m = dir.path().join("m.pgm");
    amsr_core::netpbm::save_mask(&amsr_core::BitMask2D::from_fn(40, 40, |y, _| y < 20), &m).unwrap();
    let o = amsr(&["flops", "--model", &asset("models/tiny-cnn.json"), "--mask", &s(&m)]);
    assert_eq!(code(&o), 0);
    let text = String::from_utf8_lossy(&o.stdout);
    assert!(text.contains("FLOPs (2 x MACs)"));
    let o = amsr(&[
        "flops",
        "--model",
        &asset("models/tiny-stl.json"),
        "--mask",
        &s(&m),
        "--csv",
    ]);
    assert_eq!(code(&o), 0);
    let csv = String::from_utf8_lossy(&o.stdout);
    assert!(csv.starts_with("layer,dense_macs,sparse_macs,fraction\n"));
}

#[test]
fn psnr_identical_and_uniform_offset() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a.ppm"), dir.path().join("b.ppm"));
    save_image(&Tensor::filled(3, 4, 4, 100.0 / 255.0), &a).unwrap();
    save_image(&Tensor::filled(3, 4, 4, 110.0 / 255.0), &b).unwrap();
    let o = amsr(&["psnr", &s(&a), &s(&a)]);
    assert_eq!(String::from_utf8_lossy(&o.stdout).trim(), "inf");
    let o = amsr(&["psnr", &s(&a), &s(&b)]);
    let v: f64 = String::from_utf8_lossy(&o.stdout).trim().parse().unwrap();
    let expect = 20.0 * (255.0f64 / 10.0).log10();
    assert!((v - expect).abs() < 1e-3, "{v} vs {expect}");
}

#[test]
fn bench_rows_are_ordered_and_thread_count_independent() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("corpus");
    std::fs::create_dir(&corpus).unwrap();
    for name in ["02_stripes.ppm", "01_blocks.ppm"] {
        let t = load_image(assets().join("corpus").join(name))
            .unwrap()
            .crop(24, 32)
            .unwrap();
        save_image(&t, corpus.join(name)).unwrap();
    }
    let run = |threads: &str, out: &Path| {
        let o = Command::new(env!("CARGO_BIN_EXE_amsr"))
            .env("AMSR_THREADS", threads)
            .args([
                "bench",
                "--model",
                &asset("models/tiny-cnn.json"),
                "--weights",
                &asset("models/tiny-cnn.amsrw"),
                "--corpus",
                &s(&corpus),
                "--sweep",
                "dilate",
                "-o",
                &s(out),
            ])
            .output()
            .unwrap();
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
        // drop the timing column before comparing
        std::fs::read_to_string(out)
            .unwrap()
            .lines()
            .map(|l| l.rsplit_once(',').unwrap().0.to_string())
            .collect::<Vec<_>>()
    };
    let one = run("1", &dir.path().join("a.csv"));
    let four = run("4", &dir.path().join("b.csv"));
    assert_eq!(one, four);
    assert_eq!(one[0], "image,setting,coverage,fraction,psnr_vs_dense");
    assert_eq!(one.len(), 1 + 2 * 6);
    assert!(one[1].starts_with("01_blocks.ppm,dilate=1,"));
    assert!(one[7].starts_with("02_stripes.ppm,dilate=1,"));

    let empty = dir.path().join("empty");
    std::fs::create_dir(&empty).unwrap();
    let o = amsr(&[
        "bench",
        "--model",
        &asset("models/tiny-cnn.json"),
        "--weights",
        &asset("models/tiny-cnn.amsrw"),
        "--corpus",
        &s(&empty),
        "--sweep",
        "sigma",
        "-o",
        &s(&dir.path().join("c.csv")),
    ]);
    assert_ne!(code(&o), 0);
}
