//! End to end over a small on-disk part library.

use std::fs;
use std::path::Path;

use brickir::connectors::ConnectorFamily;
use brickir::geometry::Vec3;
use brickir::graph::{match_connectors, sample_path, MatchTolerances};
use brickir::ldraw::{parse_structure, NodeId, ParseOptions};
use brickir::program::{execute, parse_program_strict, serialize, validate_prefix, ErrorCode};
use brickir::Catalog;

const PLATE: &str = "0 Plate 2 x 2
0 Name: plate22.dat
1 16 -10 0 -10 1 0 0 0 1 0 0 0 1 stud.dat
1 16 10 0 -10 1 0 0 0 1 0 0 0 1 stud.dat
1 16 -10 0 10 1 0 0 0 1 0 0 0 1 stud.dat
1 16 10 0 10 1 0 0 0 1 0 0 0 1 stud.dat
1 16 -10 4 -10 1 0 0 0 1 0 0 0 1 stud4.dat
1 16 10 4 -10 1 0 0 0 1 0 0 0 1 stud4.dat
1 16 -10 4 10 1 0 0 0 1 0 0 0 1 stud4.dat
1 16 10 4 10 1 0 0 0 1 0 0 0 1 stud4.dat
4 16 -20 0 -20 20 0 -20 20 0 20 -20 0 20
4 16 -20 8 -20 -20 8 20 20 8 20 20 8 -20
4 16 -20 0 -20 -20 8 -20 20 8 -20 20 0 -20
4 16 -20 0 20 20 0 20 20 8 20 -20 8 20
4 16 -20 0 -20 -20 0 20 -20 8 20 -20 8 -20
4 16 20 0 -20 20 8 -20 20 8 20 20 0 20
";

// second plate turned a quarter, third one overhanging by a stud column
const MODEL: &str = "0 FILE main.ldr
0 three plates
1 4 0 0 0 1 0 0 0 1 0 0 0 1 plate22.dat
1 16 0 0 0 1 0 0 0 1 0 0 0 1 sub.ldr
0 NOFILE
0 FILE sub.ldr
1 1 0 -8 0 0 0 1 0 1 0 -1 0 0 plate22.dat
1 14 20 -16 0 1 0 0 0 1 0 0 0 1 plate22.dat
0 NOFILE
";

fn library(dir: &Path) -> Catalog {
    fs::create_dir_all(dir.join("parts")).unwrap();
    fs::write(dir.join("parts/plate22.dat"), PLATE).unwrap();
    Catalog::load_dir(dir).unwrap()
}

#[test]
fn file_to_program_and_back() {
    let tmp = tempfile::tempdir().unwrap();
    let cat = library(tmp.path());
    assert_eq!(cat.part_name("plate22.dat").unwrap(), "plate 2 x 2");
    assert_eq!(cat.connectors("plate22.dat").unwrap().len(), 8);

    let s = parse_structure(MODEL.as_bytes(), &cat, &ParseOptions::default()).unwrap();
    assert_eq!(s.instances.len(), 3);
    assert_eq!(s.instances[2].pose.translation, Vec3::new(20.0, -16.0, 0.0));

    let g = match_connectors(&s.instances, &cat, &MatchTolerances::default()).unwrap();
    assert_eq!(g.edges.len(), 4 + 2);
    assert!(g.edges.iter().all(|e| e.family == ConnectorFamily::Stud));
    assert_eq!(g.components().len(), 1);

    for seed in 0..20 {
        let path = sample_path(&g, Some(NodeId(0)), 100, seed).unwrap();
        assert_eq!(path.len(), 3);
        let text = serialize(&path, &g, &cat).unwrap();
        let report = validate_prefix(&text, &cat, true);
        assert!(report.first_error.is_none(), "{text}");
        assert_eq!((report.connectivity_steps, report.collision_steps), (3, 3));

        let run = execute(&parse_program_strict(&text, &cat).unwrap(), &cat).unwrap();
        for (k, node) in run.nodes.iter().enumerate() {
            let id: usize = path.nodes()[k].0 as usize;
            let want = s.instances[id].pose;
            assert!(node.pose.max_abs_diff(&want) < 1e-9, "node {k} of\n{text}");
        }
    }
}

#[test]
fn stacked_plates_validate_and_stud_pairs_do_not() {
    let tmp = tempfile::tempdir().unwrap();
    let cat = library(tmp.path());
    let good = "a plate 2 x 2 | red\nb plate 2 x 2 | blue\na stud stud a tube c 0\n";
    let r = validate_prefix(good, &cat, true);
    assert_eq!((r.connectivity_steps, r.collision_steps), (2, 2));
    // studs meeting studs is not a connection at all
    let bad = "a plate 2 x 2 | red\nb plate 2 x 2 | blue\na stud stud a stud a 0\n";
    let r = validate_prefix(bad, &cat, true);
    assert_eq!(r.first_error.unwrap().code, ErrorCode::IncompatibleSubtypes);
    assert_eq!(r.connectivity_steps, 1);
}

#[test]
fn missing_catalog_dir_is_an_error() {
    let tmp = tempfile::tempdir().unwrap();
    assert!(Catalog::load_dir(&tmp.path().join("nope")).is_err());
}
