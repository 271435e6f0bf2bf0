#![allow(dead_code)]

use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use image::{Rgb, RgbImage};
use imos::dataset::{write_mask, write_rgb_png};
use imos::segmentation::BinaryMask;
use serde_json::Value;

pub fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}

pub struct Output {
    pub code: i32,
    pub stdout: String,
    pub stderr: String,
}

pub fn imos(args: &[&str]) -> Output {
    let out = Command::new(env!("CARGO_BIN_EXE_imos")).args(args).output().expect("spawn imos");
    Output {
        code: out.status.code().unwrap_or(-1),
        stdout: String::from_utf8_lossy(&out.stdout).into_owned(),
        stderr: String::from_utf8_lossy(&out.stderr).into_owned(),
    }
}

pub fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

/// A davis-layout dataset with the frames of `synthetic_rects.json`, plus a
/// JSON file mapping its sequences to categories.
pub fn synthetic_dataset(dir: &Path) -> (PathBuf, PathBuf) {
    let layout: Value = serde_json::from_str(&fs::read_to_string(fixtures().join("synthetic_rects.json")).unwrap()).unwrap();
    let root = dir.join("synthetic");
    for fr in layout["frames"].as_array().unwrap() {
        let (seq, frame) = (fr["sequence"].as_str().unwrap(), fr["frame"].as_str().unwrap());
        let (h, w) = (fr["height"].as_u64().unwrap() as usize, fr["width"].as_u64().unwrap() as usize);
        let mut mask = BinaryMask::empty(h, w);
        for r in fr["rects"].as_array().unwrap() {
            let r: Vec<usize> = r.as_array().unwrap().iter().map(|v| v.as_u64().unwrap() as usize).collect();
            for y in r[0]..r[2] {
                for x in r[1]..r[3] {
                    mask.set(y, x, true);
                }
            }
        }
        let rgb = RgbImage::from_fn(w as u32, h as u32, |x, y| {
            if mask.get(y as usize, x as usize) {
                Rgb([220, 40, 40])
            } else {
                Rgb([20, (x * 3) as u8, (y * 5) as u8])
            }
        });
        let images = root.join("JPEGImages/480p").join(seq);
        let annotations = root.join("Annotations/480p").join(seq);
        fs::create_dir_all(&images).unwrap();
        fs::create_dir_all(&annotations).unwrap();
        write_rgb_png(&rgb, &images.join(format!("{frame}.png"))).unwrap();
        write_mask(&mask, &annotations.join(format!("{frame}.png"))).unwrap();
    }
    let categories = dir.join("categories.json");
    fs::write(&categories, layout["categories"].to_string()).unwrap();
    (root, categories)
}

pub const DESCRIPTION: &str = "A red box is sliding to the right, in the middle of the frame.";
pub const REFINED: &str = "A red box is moving, in the centre of the frame.";

/// Search reply, then verdicts; refinements follow every verdict but the last.
pub fn script(verdicts: &[&str]) -> Vec<String> {
    let mut s = vec![format!("Step 1: a table with a box.\n\n{DESCRIPTION}")];
    for (k, v) in verdicts.iter().enumerate() {
        s.push(v.to_string());
        if k + 1 < verdicts.len() {
            s.push(REFINED.to_string());
        }
    }
    s
}

pub const CORRECT: &str = "The mask covers the sliding box.\nVERDICT: CORRECT\nThe box edges are blurred.";
pub const INCORRECT: &str = "VERDICT: INCORRECT\nThe mask includes the table.";

/// An input image, its annotation, a reply script and a config file using
/// them with the given segmenter.
pub fn segment_setup(dir: &Path, replies: &[String], segmenter: &str) -> PathBuf {
    let rgb = RgbImage::from_fn(40, 30, |x, y| {
        if (10..25).contains(&x) && (8..20).contains(&y) {
            Rgb([210, 30, 30])
        } else {
            Rgb([(x * 5) as u8, (y * 7) as u8, 60])
        }
    });
    write_rgb_png(&rgb, &dir.join("frame.png")).unwrap();
    write_mask(&BinaryMask::rect(30, 40, 8, 10, 20, 25), &dir.join("gt.png")).unwrap();
    fs::write(dir.join("replies.json"), serde_json::to_string(replies).unwrap()).unwrap();
    let config = dir.join("run.toml");
    fs::write(
        &config,
        format!(
            "seed = 3\noutput = \"out\"\n\n[reasoner]\nscript_file = \"replies.json\"\n\n\
             [segmenter]\nkind = \"{segmenter}\"\nground_truth = \"gt.png\"\n\n\
             [segment]\nimage = \"frame.png\"\n"
        ),
    )
    .unwrap();
    config
}

pub fn read_json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

/// Compares every number in `expected` with the same path in `actual`.
pub fn assert_close(expected: &Value, actual: &Value, tol: f64, at: &str) {
    match expected {
        Value::Number(n) => {
            let (e, a) = (n.as_f64().unwrap(), actual.as_f64().unwrap_or_else(|| panic!("{at}: {actual}")));
            assert!((e - a).abs() <= tol, "{at}: expected {e}, got {a}");
        }
        Value::Object(map) => {
            for (k, v) in map {
                assert_close(v, &actual[k.as_str()], tol, &format!("{at}.{k}"));
            }
        }
        Value::Array(items) => {
            let got = actual.as_array().unwrap_or_else(|| panic!("{at}: not an array"));
            assert_eq!(items.len(), got.len(), "{at}: length");
            for (i, (e, a)) in items.iter().zip(got).enumerate() {
                assert_close(e, a, tol, &format!("{at}[{i}]"));
            }
        }
        other => assert_eq!(other, actual, "{at}"),
    }
}

/// The report's field names for the fixture's: `jf` is the headline J&F,
/// which uses the boundary variant.
pub fn normalise_fixture(mut fixture: Value) -> Value {
    fn rename(v: &mut Value) {
        match v {
            Value::Object(map) => {
                if let Some(x) = map.remove("jf_boundary") {
                    map.insert("jf".into(), x);
                }
                map.values_mut().for_each(rename);
            }
            Value::Array(items) => items.iter_mut().for_each(rename),
            _ => {}
        }
    }
    rename(&mut fixture);
    fixture
}

/// The eroded-oracle report laid out like the fixture.
pub fn report_as_fixture(report: &Value) -> Value {
    let mut out = report.clone();
    out["overall_by_category"] = report["overall"].clone();
    out
}
