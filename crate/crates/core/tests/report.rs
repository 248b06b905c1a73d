use diachron_core::analysis::{build_atlas, trajectory, window_deltas, Conditioning, Params};
use diachron_core::diachronic::{view, YearWindow};
use diachron_core::report::{emit_report, render, Format, Report};
use diachron_core::store::{corpora, load_store, write_store, RecordFilter};
use diachron_testkit::equivalence::random_fixture;

fn fixture_report() -> (Report, Report, Report) {
    let f = random_fixture(21);
    let v = view(&f.records);
    let params = Params::default();
    let concept = &f.spec.concepts[0];
    let corpus = &corpora(&f.records)[0];
    let series = trajectory(&v, concept, corpus, &f.years, Conditioning::All, &params).unwrap();
    let w = YearWindow::new(f.spec.year_min, f.spec.year_min);
    let deltas = window_deltas(&v, concept, corpus, &[(w, w)], Conditioning::All, &params).unwrap();
    let atlas = build_atlas(&v, &f.spec.concepts, &corpora(&f.records), &f.years, &params, Default::default()).unwrap();
    (Report::Trajectory(series), Report::WindowDelta(deltas), Report::Atlas(atlas))
}

#[test]
fn trajectory_svg_is_xml_with_one_polyline_per_series() {
    let (traj, _, _) = fixture_report();
    let Report::Trajectory(series) = &traj else { unreachable!() };
    let svg = render(&traj, Format::Svg).unwrap();
    let doc = roxmltree::Document::parse(&svg).expect("valid XML");
    assert_eq!(doc.root_element().tag_name().name(), "svg");
    let polylines = doc.descendants().filter(|n| n.has_tag_name("polyline")).count();
    assert_eq!(polylines, series.len());
}

#[test]
fn heatmap_svg_has_one_cell_per_component() {
    let (_, deltas, _) = fixture_report();
    let Report::WindowDelta(d) = &deltas else { unreachable!() };
    let svg = render(&deltas, Format::Svg).unwrap();
    let doc = roxmltree::Document::parse(&svg).expect("valid XML");
    let cells = doc
        .descendants()
        .filter(|n| n.has_tag_name("rect") && n.attribute("stroke") == Some("white"))
        .count();
    assert_eq!(cells, d[0].components.len());
}

#[test]
fn atlas_csv_parses_back() {
    let (_, _, atlas) = fixture_report();
    let Report::Atlas(rows) = &atlas else { unreachable!() };
    let csv_text = render(&atlas, Format::Csv).unwrap();
    let mut reader = csv::Reader::from_reader(csv_text.as_bytes());
    assert_eq!(reader.headers().unwrap().get(0), Some("concept_id"));
    let parsed: Vec<csv::StringRecord> = reader.records().map(Result::unwrap).collect();
    assert_eq!(parsed.len(), rows.len());
    for (p, r) in parsed.iter().zip(rows) {
        assert_eq!(p.get(4).unwrap().parse::<i32>().unwrap(), r.peak_year);
    }
}

#[test]
fn json_round_trips() {
    let (traj, _, atlas) = fixture_report();
    for r in [traj, atlas] {
        let text = render(&r, Format::Json).unwrap();
        let back: Report = serde_json::from_str(&text).unwrap();
        assert_eq!(back, r);
    }
}

#[test]
fn emit_writes_identical_files() {
    let (traj, _, _) = fixture_report();
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a.svg"), dir.path().join("b.svg"));
    emit_report(&traj, Format::Svg, &a).unwrap();
    emit_report(&traj, Format::Svg, &b).unwrap();
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    let err = emit_report(&traj, Format::Svg, &dir.path().join("missing/x.svg")).unwrap_err();
    assert_eq!(err.kind(), "io");
}

#[test]
fn pipeline_from_disk_matches_in_memory() {
    let f = random_fixture(33);
    let dir = tempfile::tempdir().unwrap();
    write_store(dir.path(), &f.spec.manifest("s"), &f.records).unwrap();
    let store = load_store(dir.path(), &RecordFilter::all()).unwrap();
    let params = Params::default();
    let cs = corpora(&f.records);
    let a = build_atlas(&view(&store.records), &f.spec.concepts, &cs, &f.years, &params, Default::default()).unwrap();
    let b = build_atlas(&view(&f.records), &f.spec.concepts, &cs, &f.years, &params, Default::default()).unwrap();
    assert_eq!(a, b);
}
