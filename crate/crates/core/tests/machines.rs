use std::path::PathBuf;

use ocp_chaos::machines::*;
use ocp_chaos::params::density_limit;
use ocp_chaos::Error;
use proptest::prelude::*;

fn rec(name: &str, family: Family, b: f64, n: f64) -> MachineRecord {
    MachineRecord { name: name.into(), family, field_b: b, density_limit_n: n, reference: "ref".into() }
}

fn golden(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(name)
}

fn parse_str(s: &str) -> ocp_chaos::Result<LoadedRecords> {
    parse_records(s.as_bytes())
}

/// Pull `(x, y)` pairs out of the first `points="..."` after `marker`.
fn points_after(svg: &str, marker: &str) -> Vec<(f64, f64)> {
    let start = svg.find(marker).expect("element present");
    let rest = &svg[start..];
    let p = rest.find("points=\"").unwrap() + 8;
    let end = rest[p..].find('"').unwrap();
    rest[p..p + end]
        .split_whitespace()
        .map(|xy| {
            let (x, y) = xy.split_once(',').unwrap();
            (x.parse().unwrap(), y.parse().unwrap())
        })
        .collect()
}

fn circles(svg: &str) -> Vec<(f64, f64)> {
    let attr = |line: &str, key: &str| -> f64 {
        let p = line.find(key).unwrap() + key.len();
        let end = line[p..].find('"').unwrap();
        line[p..p + end].parse().unwrap()
    };
    svg.lines()
        .filter(|l| l.starts_with("<circle class=\"marker\""))
        .map(|l| (attr(l, "cx=\""), attr(l, "cy=\"")))
        .collect()
}

#[test]
fn header_only_is_empty() {
    let r = parse_str("machine,family,B_tesla,n_limit_per_m3,reference\n").unwrap();
    assert!(r.records.is_empty());
    assert!(r.warnings.is_empty());
}

#[test]
fn row_is_echoed() {
    let r = parse_str("machine,family,B_tesla,n_limit_per_m3,reference\nX,tokamak,2.0,8.0e19,ref\n").unwrap();
    assert_eq!(r.records, vec![rec("X", Family::Tokamak, 2.0, 8.0e19)]);
}

#[test]
fn bad_rows_report_line_numbers() {
    let text = "machine,family,B_tesla,n_limit_per_m3,reference\nA,tokamak,1,1e19,r\nB,tokamak,-1,1e19,r\n";
    match parse_str(text) {
        Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
        other => panic!("{other:?}"),
    }
    match parse_str("machine,family,B_tesla,n_limit_per_m3,reference\nA,tokamak,abc,1e19,r\n") {
        Err(Error::Parse { line, message }) => {
            assert_eq!(line, 2);
            assert!(message.contains("B_tesla"));
        }
        other => panic!("{other:?}"),
    }
    assert!(matches!(parse_str("A,tokamak,1,1e19,r\n"), Err(Error::Parse { line: 1, .. })));
    assert!(matches!(parse_str("machine,family,B,n_limit_per_m3,reference\n"), Err(Error::Parse { line: 1, .. })));
    assert!(matches!(parse_str(""), Err(Error::Parse { line: 1, .. })));
    assert!(parse_str("machine,family,B_tesla,n_limit_per_m3,reference\n,tokamak,1,1e19,r\n").is_err());
    assert!(parse_str("machine,family,B_tesla,n_limit_per_m3,reference\nA,tokamak,1,0,r\n").is_err());
    assert!(parse_str("machine,family,B_tesla,n_limit_per_m3,reference\nA,tokamak,1,1e19\n").is_err());
}

#[test]
fn unknown_family_becomes_other() {
    let r = parse_str("machine,family,B_tesla,n_limit_per_m3,reference\nM,mirror,1,1e19,r\n").unwrap();
    assert_eq!(r.records[0].family, Family::Other);
    assert_eq!(r.warnings.len(), 1);
    assert!(r.warnings[0].contains("mirror"));
}

#[test]
fn duplicate_operating_points_are_kept() {
    let text = "machine,family,B_tesla,n_limit_per_m3,reference\nW,stellarator,2.5,1e20,a\nW,stellarator,2.5,2e20,b\n";
    assert_eq!(parse_str(text).unwrap().records.len(), 2);
}

#[test]
fn sample_dataset_loads() {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data/sample_machines.csv");
    let records = load_records(&path).unwrap();
    assert!(records.len() >= 4);
    assert!(records.iter().all(|r| r.reference.contains("synthetic")));
}

#[test]
fn residual_oracles() {
    let res = residuals(&[
        rec("on", Family::Tokamak, 1.0, 1.458e19),
        rec("decade", Family::SphericalTokamak, 1.0, 1.458e20),
    ])
    .unwrap();
    assert!((res[0].ratio - 1.0).abs() < 1e-3);
    assert!((res[1].log10_ratio - 1.0).abs() < 1e-3);
    assert_eq!(res[0].n_predicted, density_limit(1.0).unwrap());

    let exact = density_limit(1.0).unwrap() * 10.0;
    let res = residuals(&[rec("up", Family::SphericalTokamak, 1.0, exact)]).unwrap();
    let mut buf = Vec::new();
    write_residuals(&res, &mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "machine,family,B_tesla,n_observed,n_predicted,ratio,log10_ratio");
    assert!(lines.next().unwrap().ends_with(",1.000"));
}

#[test]
fn empty_figure_is_line_only() {
    let svg = render_svg(&[], [0.1, 10.0]).unwrap();
    assert_eq!(svg.matches("<polyline").count(), 1);
    assert_eq!(svg.matches("class=\"marker\"").count(), 0);
    assert!(svg.contains("B [T]"));
    assert!(svg.contains("n [m⁻³]"));
    assert!(svg.contains("stroke-dasharray"));
    assert!(!svg.contains("href"));
}

#[test]
fn theory_line_endpoints_and_slope() {
    let lay = FigureLayout::new(&[], [0.1, 10.0]).unwrap();
    let svg = render_svg(&[], [0.1, 10.0]).unwrap();
    let pts = points_after(&svg, "class=\"theory\"");
    assert_eq!(pts.len(), 2);
    assert!((pts[0].0 - lay.x(0.1)).abs() < 1e-3);
    assert!((pts[0].1 - lay.y(1.458e17)).abs() < 0.1);
    assert!((pts[1].0 - lay.x(10.0)).abs() < 1e-3);
    assert!((pts[1].1 - lay.y(1.458e21)).abs() < 0.1);

    // back to decades through the axis scales
    let px_per_decade_x = (lay.right - lay.left) / (lay.log_b[1] - lay.log_b[0]);
    let px_per_decade_y = (lay.bottom - lay.top) / (lay.log_n[1] - lay.log_n[0]);
    let slope = ((pts[0].1 - pts[1].1) / px_per_decade_y) / ((pts[1].0 - pts[0].0) / px_per_decade_x);
    assert!((slope - 2.0).abs() < 1e-4, "{slope}");
}

#[test]
fn on_line_points_sit_on_the_line() {
    let records =
        [rec("A", Family::Tokamak, 0.5, density_limit(0.5).unwrap()), rec("B", Family::Tokamak, 4.0, density_limit(4.0).unwrap())];
    let svg = render_svg(&records, [0.1, 10.0]).unwrap();
    let line = points_after(&svg, "class=\"theory\"");
    let (x0, y0, x1, y1) = (line[0].0, line[0].1, line[1].0, line[1].1);
    let markers = circles(&svg);
    assert_eq!(markers.len(), 2);
    for (x, y) in markers {
        let on_line = y0 + (y1 - y0) * (x - x0) / (x1 - x0);
        assert!((y - on_line).abs() < 1.0, "{y} vs {on_line}");
    }
}

#[test]
fn golden_figure() {
    let records = [
        rec("A", Family::Tokamak, 0.5, density_limit(0.5).unwrap()),
        rec("B", Family::Tokamak, 4.0, density_limit(4.0).unwrap()),
        rec("C", Family::Stellarator, 2.5, 2.0e20),
        rec("D", Family::SphericalTokamak, 0.5, 3.6e19),
        rec("E", Family::Other, 1.0, 5.0e18),
    ];
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("figure.svg");
    let svg = export_figure(&records, [0.1, 10.0], &out).unwrap();
    assert_eq!(std::fs::read_to_string(&out).unwrap(), svg);
    let path = golden("figure.svg");
    if std::env::var_os("UPDATE_GOLDEN").is_some() {
        std::fs::write(&path, &svg).unwrap();
    }
    assert_eq!(svg, std::fs::read_to_string(&path).unwrap());
    assert_eq!(svg.matches("class=\"marker\"").count(), 5);
}

#[test]
fn bad_ranges_are_rejected() {
    assert!(render_svg(&[], [10.0, 0.1]).is_err());
    assert!(render_svg(&[], [0.0, 1.0]).is_err());
}

fn family() -> impl Strategy<Value = Family> {
    prop_oneof![
        Just(Family::Tokamak),
        Just(Family::Stellarator),
        Just(Family::SphericalTokamak),
        Just(Family::Other)
    ]
}

fn record() -> impl Strategy<Value = MachineRecord> {
    ("[A-Za-z][A-Za-z0-9 ,\"-]{0,12}", family(), 1e-2f64..1e2, 1e16f64..1e22, "[ -~]{0,20}").prop_map(
        |(name, family, field_b, density_limit_n, reference)| MachineRecord {
            name,
            family,
            field_b,
            density_limit_n,
            reference,
        },
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn save_then_load_is_identity(records in prop::collection::vec(record(), 0..8)) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.csv");
        save_records(&records, &path).unwrap();
        prop_assert_eq!(load_records(&path).unwrap(), records);
    }

    #[test]
    fn residuals_commute_with_permutation(records in prop::collection::vec(record(), 1..8), shift in 0usize..8) {
        let mut rotated = records.clone();
        rotated.rotate_left(shift % records.len());
        let a = residuals(&records).unwrap();
        let b = residuals(&rotated).unwrap();
        for r in &a {
            let m = b.iter().find(|x| x.record == r.record).unwrap();
            prop_assert_eq!(m.ratio, r.ratio);
        }
    }
}
