use std::fs;
use std::path::Path;

use xaipipe::explain::Method;
use xaipipe::models::Family;
use xaipipe::pipeline::{self, DataSource, RunConfig, SampleSelector};
use xaipipe::report::{render_to_string, sanitize, PlotKind, PlotSpec, Series, TOP_BARS};

fn parse(svg: &str) -> roxmltree::Document<'_> {
    let doc = roxmltree::Document::parse(svg).expect("well-formed XML");
    let root = doc.root_element();
    assert_eq!(root.tag_name().name(), "svg");
    assert_eq!(root.tag_name().namespace(), Some("http://www.w3.org/2000/svg"));
    for a in ["width", "height", "viewBox"] {
        assert!(root.attribute(a).is_some(), "missing {a}");
    }
    doc
}

/// Bar labels in document (top-to-bottom) order.
fn bar_labels(doc: &roxmltree::Document) -> Vec<String> {
    doc.descendants()
        .filter(|n| n.has_tag_name("text") && n.attribute("text-anchor") == Some("end"))
        .map(|n| n.text().unwrap_or_default().to_string())
        .collect()
}

fn num(n: roxmltree::Node, a: &str) -> f64 {
    n.attribute(a).unwrap().parse().unwrap()
}

#[test]
fn every_plot_kind_is_valid_svg() {
    let xy = |name: &str| Series {
        name: name.into(),
        x: vec![0.0, 0.5, 1.0],
        y: vec![1.0, -0.5, 2.0],
    };
    let mut specs = vec![PlotSpec::bar(
        "bars <&>",
        "value",
        vec!["a\"b".into(), "c'd".into()],
        vec![0.3, -0.1],
        Some(vec![0.05, 0.0]),
    )];
    for kind in [PlotKind::Curve, PlotKind::CurveFamily, PlotKind::Scatter] {
        let mut s = PlotSpec::new(kind, "t", "x", "y");
        s.series = vec![xy("ice_0"), xy("mean")];
        specs.push(s);
    }
    let mut panel = PlotSpec::new(PlotKind::RulePanel, "rules", "weight", "");
    panel.series.push(xy("w"));
    panel.labels = vec!["0.10 < F1 <= 0.50".into(), "F2 > 0.30".into(), "F3 <= 0.00".into()];
    panel.annotations = vec!["F1 = 0.2".into(), "F2 = 0.9".into(), "F3 = -1".into()];
    specs.push(panel);
    for s in &specs {
        let text = render_to_string(s).unwrap();
        parse(&text);
        assert_eq!(text, render_to_string(s).unwrap());
    }
    let doc_text = render_to_string(&specs[0]).unwrap();
    assert_eq!(bar_labels(&parse(&doc_text)), ["a\"b", "c'd"]);
}

#[test]
fn malformed_specs_are_rejected() {
    let mut s = PlotSpec::bar("t", "x", vec!["a".into()], vec![1.0, 2.0], None);
    assert!(render_to_string(&s).is_err());
    s.labels.push("b".into());
    s.error_bars = Some(vec![0.1]);
    assert!(render_to_string(&s).is_err());
    assert!(render_to_string(&PlotSpec::new(PlotKind::Curve, "t", "x", "y")).is_err());
}

#[test]
fn perfect_regressor_scatter_lies_on_the_diagonal() {
    let v = vec![-2.0, 0.5, 1.0, 3.25, 7.0];
    let mut s = PlotSpec::new(PlotKind::Scatter, "fit", "observed", "predicted");
    s.series.push(Series {
        name: "test".into(),
        x: v.clone(),
        y: v,
    });
    let text = render_to_string(&s).unwrap();
    let doc = parse(&text);
    let diag = doc
        .descendants()
        .find(|n| n.has_tag_name("line") && num(*n, "x1") != num(*n, "x2") && num(*n, "y1") != num(*n, "y2"))
        .expect("diagonal");
    let (x1, y1, x2, y2) = (num(diag, "x1"), num(diag, "y1"), num(diag, "x2"), num(diag, "y2"));
    let circles: Vec<_> = doc.descendants().filter(|n| n.has_tag_name("circle")).collect();
    assert_eq!(circles.len(), 5);
    for c in circles {
        let (cx, cy) = (num(c, "cx"), num(c, "cy"));
        let cross = (x2 - x1) * (cy - y1) - (y2 - y1) * (cx - x1);
        let dist = cross.abs() / ((x2 - x1).hypot(y2 - y1));
        assert!(dist < 0.05, "{dist}");
    }
}

#[test]
fn names_are_sanitized_for_paths() {
    assert_eq!(sanitize("ChestPainType=ATA"), "ChestPainType_ATA");
    assert_eq!(sanitize("a/b c.d-e"), "a_b_c.d-e");
    assert_eq!(sanitize(""), "_");
}

fn run_small(out: &Path) -> pipeline::RunArtifacts {
    let mut cfg = RunConfig::new(
        DataSource::Synthetic {
            rules: "two_feature_box".into(),
            n_samples: 400,
        },
        &[Family::DecisionTree, Family::Logistic],
        &[Method::Permutation, Method::Lime, Method::Counterfactual, Method::Ale, Method::PdpIce],
        out,
    );
    cfg.samples = SampleSelector::First(4);
    cfg.seed = 9;
    cfg.explain.lime_perturbations = 500;
    cfg.explain.curve_features = Some(vec!["F3".into(), "F6".into()]);
    pipeline::run(&cfg).unwrap()
}

#[test]
fn run_outputs_are_valid_and_bars_follow_the_tables() {
    let tmp = tempfile::tempdir().unwrap();
    let art = run_small(tmp.path());
    let mut svgs = 0;
    for rel in art.manifest.artifacts.values().filter(|r| r.ends_with(".svg")) {
        let text = fs::read_to_string(tmp.path().join(rel)).unwrap();
        parse(&text);
        svgs += 1;
    }
    assert!(svgs >= 10, "{svgs}");
    for key in ["curves/DT_pdp_F3", "curves/LOGREG_ice_F6", "curves/LOGREG_ale_F3", "rules/DT_lime_rules", "counterfactuals/LOGREG_dice"] {
        assert!(art.manifest.artifacts.contains_key(key), "{key}");
    }

    for rel in art.manifest.artifacts.values().filter(|r| r.starts_with("consensus/") && r.ends_with(".csv")) {
        let mut rdr = csv::Reader::from_path(tmp.path().join(rel)).unwrap();
        assert_eq!(rdr.headers().unwrap().iter().collect::<Vec<_>>(), ["rank", "feature", "score", "dispersion"]);
        let order: Vec<String> = rdr.records().map(|r| r.unwrap()[1].to_string()).take(TOP_BARS).collect();
        let svg = fs::read_to_string(tmp.path().join(rel.replace(".csv", ".svg").replace("consensus/", "plots/"))).unwrap();
        assert_eq!(bar_labels(&parse(&svg)), order, "{rel}");
    }

    let global = fs::read_to_string(tmp.path().join("attributions/DT_lime_global.csv")).unwrap();
    assert!(global.starts_with("feature,mean_abs_attribution,std\n"));
    let perm = fs::read_to_string(tmp.path().join("attributions/DT_permutation_global.csv")).unwrap();
    assert!(perm.starts_with("feature,importance,std\n"));
    let metrics = fs::read_to_string(tmp.path().join("metrics/DT_metrics.csv")).unwrap();
    assert!(metrics.starts_with("metric,value"));
}

#[test]
fn outputs_carry_no_run_specific_bytes() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let x = run_small(a.path());
    run_small(b.path());
    for rel in x.manifest.artifacts.values() {
        let p = fs::read(a.path().join(rel)).unwrap();
        let q = fs::read(b.path().join(rel)).unwrap();
        assert!(p == q, "{rel}");
        let text = String::from_utf8(p).unwrap();
        assert!(!text.contains(a.path().to_str().unwrap()), "{rel} embeds the output path");
    }
}
