use std::path::Path;
use std::process::{Command, Output};

use retina_kit::imgio::{load_mask, save_image, BinaryMask};
use retina_kit::severity::Point;
use retina_kit::{ColorSpace, RasterImage};
use serde_json::Value;

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_retina-kit"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = run(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn phantoms(dir: &Path, seed: u64, count: usize) {
    ok(&[
        "phantom",
        "--count",
        &count.to_string(),
        "--seed",
        &seed.to_string(),
        "--out-dir",
        p(dir),
    ]);
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn components(mask: &BinaryMask) -> Vec<Vec<(usize, usize)>> {
    let (w, h) = (mask.width(), mask.height());
    let mut seen = vec![false; w * h];
    let mut out = Vec::new();
    for start in 0..w * h {
        if !mask.bits()[start] || seen[start] {
            continue;
        }
        seen[start] = true;
        let mut stack = vec![start];
        let mut comp = Vec::new();
        while let Some(i) = stack.pop() {
            let (x, y) = (i % w, i / w);
            comp.push((x, y));
            for ny in y.saturating_sub(1)..=(y + 1).min(h - 1) {
                for nx in x.saturating_sub(1)..=(x + 1).min(w - 1) {
                    let j = ny * w + nx;
                    if mask.bits()[j] && !seen[j] {
                        seen[j] = true;
                        stack.push(j);
                    }
                }
            }
        }
        out.push(comp);
    }
    out
}

#[test]
fn detect_finds_phantom_lesions() {
    let dir = tempfile::tempdir().unwrap();
    phantoms(dir.path(), 500, 1);
    let mask_path = dir.path().join("mask.png");
    let out = ok(&[
        "detect",
        p(&dir.path().join("phantom_000.png")),
        "--out-mask",
        p(&mask_path),
        "--out-overlay",
        p(&dir.path().join("overlay.png")),
    ]);
    let summary: Value = serde_json::from_str(&out).unwrap();
    let mask = load_mask(&mask_path).unwrap();
    let truth = load_mask(dir.path().join("phantom_000_exudate.png")).unwrap();
    let truth_parts = components(&truth);
    let found = truth_parts
        .iter()
        .filter(|c| c.iter().any(|&(x, y)| mask.get(x, y)))
        .count();
    assert!(found >= 1);
    assert!(found * 10 >= truth_parts.len() * 9, "{found} of {}", truth_parts.len());
    assert_eq!(summary["candidate_pixels"].as_u64().unwrap() as usize, mask.count());
    assert!(dir.path().join("overlay.png").is_file());
}

#[test]
fn black_image_gives_empty_mask() {
    let dir = tempfile::tempdir().unwrap();
    let img = dir.path().join("black.png");
    save_image(&RasterImage::filled(120, 90, ColorSpace::Rgb, &[0.0; 3]).unwrap(), &img).unwrap();
    let mask_path = dir.path().join("m.png");
    ok(&["detect", p(&img), "--out-mask", p(&mask_path)]);
    let mask = load_mask(&mask_path).unwrap();
    assert_eq!(mask.count(), 0);
}

#[test]
fn exit_codes_follow_error_kind() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nowhere.png");
    let out = run(&["detect", p(&missing)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("nowhere.png"));

    assert_eq!(run(&["detect", "--bogus"]).status.code(), Some(1));
    assert_eq!(run(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(
        run(&["detect", "x.png", "--set", "binarize.nope=1"]).status.code(),
        Some(1)
    );
    assert_eq!(
        run(&["detect", "x.png", "--set", "binarize.c=7"]).status.code(),
        Some(1)
    );

    let cfg = dir.path().join("cfg.json");
    std::fs::write(&cfg, r#"{"diffusion": {"unknown": 1}}"#).unwrap();
    assert_eq!(run(&["detect", "x.png", "--config", p(&cfg)]).status.code(), Some(1));
    assert_eq!(
        run(&["detect", "x.png", "--config", p(&missing)]).status.code(),
        Some(2)
    );
    assert_eq!(run(&["--help"]).status.code(), Some(0));
}

#[test]
fn dumps_resume_and_cache_reproduce_the_mask() {
    let dir = tempfile::tempdir().unwrap();
    phantoms(dir.path(), 7, 1);
    let img = dir.path().join("phantom_000.png");
    let d = |n: &str| dir.path().join(n);
    ok(&[
        "detect",
        p(&img),
        "--out-mask",
        p(&d("a.png")),
        "--dump-intermediates",
        p(&d("dump")),
    ]);
    for f in ["working.raw", "diffused.raw", "dmap.raw", "dmap.png", "binarized.png"] {
        assert!(d("dump").join(f).is_file(), "{f}");
    }
    ok(&["detect", "--resume", p(&d("dump")), "--out-mask", p(&d("b.png"))]);
    ok(&[
        "detect",
        p(&img),
        "--out-mask",
        p(&d("c.png")),
        "--cache",
        p(&d("cache")),
    ]);
    ok(&[
        "detect",
        p(&img),
        "--out-mask",
        p(&d("e.png")),
        "--cache",
        p(&d("cache")),
    ]);
    let entries: Vec<_> = std::fs::read_dir(d("cache")).unwrap().collect();
    assert_eq!(entries.len(), 1);
    let a = std::fs::read(d("a.png")).unwrap();
    for other in ["b.png", "c.png", "e.png"] {
        assert_eq!(a, std::fs::read(d(other)).unwrap(), "{other}");
    }

    ok(&[
        "detect",
        p(&img),
        "--out-mask",
        p(&d("f.png")),
        "--cache",
        p(&d("cache")),
        "--set",
        "binarize.c=0.3",
    ]);
    assert_eq!(std::fs::read_dir(d("cache")).unwrap().count(), 2);
}

fn classify_accuracy(dir: &Path, i: usize) -> (usize, usize) {
    let stem = format!("phantom_{i:03}");
    let out = dir.join(format!("{stem}.json"));
    ok(&["classify", p(&dir.join(format!("{stem}.png"))), "--out-json", p(&out)]);
    let hard = load_mask(dir.join(format!("{stem}_hard.png"))).unwrap();
    let soft = load_mask(dir.join(format!("{stem}_soft.png"))).unwrap();
    let report = json(&out);
    let mut hits = 0;
    let mut total = 0;
    for r in report["regions"].as_array().unwrap() {
        let bb = &r["bbox"];
        let (x0, y0) = (bb["x0"].as_u64().unwrap() as usize, bb["y0"].as_u64().unwrap() as usize);
        let (x1, y1) = (bb["x1"].as_u64().unwrap() as usize, bb["y1"].as_u64().unwrap() as usize);
        let in_box = |m: &BinaryMask| {
            (y0..=y1)
                .flat_map(|y| (x0..=x1).map(move |x| (x, y)))
                .filter(|&(x, y)| m.get(x, y))
                .count()
        };
        let (nh, ns) = (in_box(&hard), in_box(&soft));
        let truth = if nh == 0 && ns == 0 {
            "Outlier"
        } else if nh >= ns {
            "Hard"
        } else {
            "Soft"
        };
        assert_eq!(r["features"].as_object().unwrap().len(), 22);
        total += 1;
        hits += (r["class"] == truth) as usize;
    }
    (hits, total)
}

#[test]
fn bundled_model_labels_phantom_lesions() {
    let dir = tempfile::tempdir().unwrap();
    phantoms(dir.path(), 900, 3);
    for i in 0..3 {
        let (hits, total) = classify_accuracy(dir.path(), i);
        assert!(total > 0);
        assert!(hits * 5 >= total * 4, "image {i}: {hits}/{total}");
    }
}

#[test]
fn training_is_deterministic_and_accurate() {
    let dir = tempfile::tempdir().unwrap();
    let train = dir.path().join("train");
    phantoms(&train, 300, 6);
    let manifest = train.join("manifest.json");
    let model = |n: &str| dir.path().join(n);
    let args = |out: &Path, seed: &str| {
        ok(&[
            "train",
            p(&manifest),
            "--out-model",
            p(out),
            "--seed",
            seed,
            "--folds",
            "3",
            "--no-search",
            "--jobs",
            "1",
        ]);
    };
    args(&model("m1.json"), "4");
    args(&model("m2.json"), "4");
    assert_eq!(
        std::fs::read(model("m1.json")).unwrap(),
        std::fs::read(model("m2.json")).unwrap()
    );
    assert_eq!(
        std::fs::read(model("m1.cv.json")).unwrap(),
        std::fs::read(model("m2.cv.json")).unwrap()
    );
    let cv = json(&model("m1.cv.json"));
    assert!(cv["cv"]["accuracy"]["mean"].as_f64().unwrap() >= 0.85);
    assert_eq!(cv["images"], 6);

    let test = dir.path().join("test");
    phantoms(&test, 950, 1);
    let out = test.join("c.json");
    ok(&[
        "classify",
        p(&test.join("phantom_000.png")),
        "--model",
        p(&model("m1.json")),
        "--out-json",
        p(&out),
    ]);
    assert!(!json(&out)["regions"].as_array().unwrap().is_empty());
}

/// Band counts and the grading ladder computed from scratch for one center.
fn oracle_grade(mask: &BinaryMask, c: Point, step: f64) -> (usize, [usize; 4]) {
    let (w, h) = (mask.width(), mask.height());
    let radii: Vec<f64> = (1..=4).map(|k| k as f64 * step * w as f64 / 1500.0).collect();
    let mut n = [0usize; 4];
    let mut area = [0usize; 4];
    for y in 0..h {
        for x in 0..w {
            let d = ((x as f64 - c.0).powi(2) + (y as f64 - c.1).powi(2)).sqrt();
            if let Some(b) = radii.iter().position(|&r| d <= r) {
                area[b] += 1;
                n[b] += mask.get(x, y) as usize;
            }
        }
    }
    let t = area.map(|a| a as f64 / 16.0);
    let over = |i: usize| n[i] as f64 > t[i];
    let within = |i: usize| n[i] > 0 && !over(i);
    let g = if over(0) {
        4
    } else if within(0) || over(1) {
        3
    } else if within(1) || over(2) {
        2
    } else if within(2) || n[3] > 0 {
        1
    } else {
        0
    };
    (g, n)
}

#[test]
fn grading_matches_ring_oracle() {
    let dir = tempfile::tempdir().unwrap();
    phantoms(dir.path(), 21, 1);
    let img = dir.path().join("phantom_000.png");
    let mask_path = dir.path().join("m.png");
    ok(&["detect", p(&img), "--out-mask", p(&mask_path)]);
    let mask = load_mask(&mask_path).unwrap();
    let lesion = components(&mask).into_iter().max_by_key(Vec::len).unwrap();
    let (lx, ly) = lesion[lesion.len() / 2];
    let names = ["none", "mild", "moderate", "severe", "proliferate"];
    let layouts = [
        (Point(lx as f64, ly as f64), Point(399.0 - lx as f64, 399.0 - ly as f64)),
        (Point(lx as f64 + 30.0, ly as f64), Point(200.0, 200.0)),
        (Point(2.0, 2.0), Point(397.0, 2.0)),
    ];
    let mut seen = std::collections::BTreeSet::new();
    for (f, od) in layouts {
        let (f, od) = (
            Point(f.0.clamp(0.0, 399.0), f.1),
            Point(od.0.clamp(0.0, 399.0), od.1.clamp(0.0, 399.0)),
        );
        let out = ok(&[
            "grade",
            p(&img),
            "--unclassified",
            "--fovea",
            &format!("{},{}", f.0, f.1),
            "--od",
            &format!("{},{}", od.0, od.1),
        ]);
        let v: Value = serde_json::from_str(&out).unwrap();
        let (gf, nf) = oracle_grade(&mask, f, 80.0);
        let (go, no) = oracle_grade(&mask, od, 55.0);
        assert_eq!(v["fovea"]["band_counts"], serde_json::json!(nf));
        assert_eq!(v["optic_disc"]["band_counts"], serde_json::json!(no));
        assert_eq!(v["fovea"]["grade"].as_str().unwrap().to_lowercase(), names[gf]);
        assert_eq!(v["grade"].as_str().unwrap().to_lowercase(), names[gf.max(go)]);
        seen.insert(gf.max(go));
    }
    assert!(seen.len() >= 2, "layouts should not all grade alike: {seen:?}");
}

#[test]
fn evaluation_reports_are_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    phantoms(&data, 40, 3);
    let manifest = data.join("manifest.json");
    let r = |n: &str| dir.path().join(n);
    ok(&[
        "eval",
        p(&manifest),
        "--sweep",
        "--out-report",
        p(&r("a.json")),
        "--jobs",
        "1",
    ]);
    ok(&["eval", p(&manifest), "--sweep", "--out-report", p(&r("b.json"))]);
    assert_eq!(std::fs::read(r("a.json")).unwrap(), std::fs::read(r("b.json")).unwrap());
    assert_eq!(std::fs::read(r("a.csv")).unwrap(), std::fs::read(r("b.csv")).unwrap());

    let report = json(&r("a.json"));
    assert_eq!(report["images"].as_array().unwrap().len(), 3);
    assert!(report["rates"]["se"].as_f64().unwrap() >= 0.9);
    assert!(report["rates"]["pred"].as_f64().unwrap() >= 0.9);
    assert!(report["sweep_roc"]["auc"].as_f64().is_some());
    assert!(report.get("mean_runtime_s").is_none());

    ok(&[
        "eval",
        p(&manifest),
        "--out-report",
        p(&r("t.json")),
        "--timing",
        "--overlays",
        p(&r("ov")),
    ]);
    assert!(json(&r("t.json"))["mean_runtime_s"].as_f64().unwrap() > 0.0);
    assert_eq!(std::fs::read_dir(r("ov")).unwrap().count(), 3);

    let out = run(&["eval", p(&r("absent.json"))]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn phantom_sets_are_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("spec.json");
    std::fs::write(
        &spec,
        r#"{"width": 256, "height": 224, "hard_count": 2, "soft_count": 1, "flare_count": 0}"#,
    )
    .unwrap();
    let gen = |out: &str, seed: &str| {
        ok(&[
            "phantom",
            "--spec",
            p(&spec),
            "--count",
            "3",
            "--seed",
            seed,
            "--out-dir",
            p(&dir.path().join(out)),
        ]);
    };
    gen("a", "5");
    gen("b", "5");
    gen("c", "6");
    let manifest = json(&dir.path().join("a/manifest.json"));
    assert_eq!(manifest.as_array().unwrap().len(), 3);
    let mut files: Vec<_> = std::fs::read_dir(dir.path().join("a"))
        .unwrap()
        .map(|e| e.unwrap().file_name())
        .collect();
    files.sort();
    assert_eq!(files.len(), 3 * 5 + 1);
    for f in &files {
        let a = std::fs::read(dir.path().join("a").join(f)).unwrap();
        assert_eq!(a, std::fs::read(dir.path().join("b").join(f)).unwrap(), "{f:?}");
    }
    let read = |f: &str| std::fs::read(dir.path().join(f)).unwrap();
    assert_ne!(read("c/phantom_000.png"), read("a/phantom_000.png"));
    assert_eq!(read("c/phantom_000.png"), read("a/phantom_001.png"));
    let img = retina_kit::imgio::load_image(dir.path().join("a/phantom_000.png")).unwrap();
    assert_eq!((img.width(), img.height()), (256, 224));

    std::fs::write(&spec, r#"{"hard_radius": [5, 2]}"#).unwrap();
    let bad = run(&["phantom", "--spec", p(&spec), "--out-dir", p(&dir.path().join("d"))]);
    assert_eq!(bad.status.code(), Some(1));
}
