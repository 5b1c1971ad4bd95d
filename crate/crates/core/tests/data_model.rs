use std::io::Write;

use proptest::prelude::*;
use proxsurr::data::*;
use proxsurr::synth::{generate, DGPConfig};
use proxsurr::Error;

const MINIMAL: &str = "g,a,y,w,z,s,x
E,1,NA,0.5,NA,1.0,2.0
E,0,NA,-0.5,NA,0.0,1.0
O,NA,3.0,0.1,0.2,1.5,0.0
O,NA,1.0,0.3,-0.2,0.5,1.0
";

#[test]
fn minimal_file_from_disk() {
    let mut f = tempfile::NamedTempFile::new().unwrap();
    f.write_all(MINIMAL.as_bytes()).unwrap();
    let d = load_csv(f.path(), &CsvSchema::default()).unwrap();
    assert_eq!((d.n_e(), d.n_o()), (2, 2));
    assert_eq!(d.dims(), Dims { w: 1, z: 1, s: 1, x: 1 });
}

#[test]
fn outcome_in_experimental_row_is_a_schema_violation() {
    let bad = MINIMAL.replace("E,1,NA,0.5", "E,1,7.0,0.5");
    let err = read_csv(bad.as_bytes(), &CsvSchema::default()).unwrap_err();
    assert!(matches!(err, Error::SchemaViolation { row: 1, .. }), "{err}");
    assert!(err.is_validation());
}

#[test]
fn missing_file_is_an_io_error() {
    assert!(matches!(
        load_csv("/nonexistent/data.csv", &CsvSchema::default()),
        Err(Error::Io(_))
    ));
}

#[test]
fn named_multi_column_roles() {
    let text = "\
sample,treat,earn_y4,ged,english,earn_y2,earn_y3,emp_y2,emp_y3,age,educ
E,1,NA,1,NA,10,12,0.5,0.6,22,11
E,0,NA,0,NA,8,9,0.4,0.3,19,10
O,NA,15,1,0,11,13,0.7,0.8,20,12
";
    let schema = CsvSchema {
        y: "earn_y4".into(),
        a: "treat".into(),
        g: "sample".into(),
        w: vec!["ged".into()],
        z: vec!["english".into()],
        s: vec!["earn_y".into(), "emp_y".into()],
        x: vec!["age".into(), "educ".into()],
        ..CsvSchema::default()
    };
    let d = read_csv(text.as_bytes(), &schema).unwrap();
    assert_eq!(d.dims().s, 4);
    assert_eq!(d.dims().x, 2);
}

#[test]
fn sample_share_examples() {
    for (n_e, n_o, want) in [(50, 150, 0.25), (7, 7, 0.5), (1, 999, 0.001)] {
        let (d, _) = generate(&DGPConfig::confounded(), n_e + n_o, n_e as f64 / (n_e + n_o) as f64, 0).unwrap();
        assert_eq!((d.n_e(), d.n_o()), (n_e, n_o));
        assert!((sample_share(&d).0 - want).abs() < 1e-15);
    }
}

fn dataset_strategy() -> impl Strategy<Value = CombinedDataset> {
    (1usize..4, 0usize..3, 1usize..6, 1usize..6).prop_flat_map(|(dw, dx, n_e, n_o)| {
        let val = -1e6f64..1e6;
        let e = prop::collection::vec(
            (
                prop::collection::vec(val.clone(), dw),
                prop::collection::vec(val.clone(), 2),
                any::<bool>(),
                prop::collection::vec(val.clone(), dx),
            ),
            n_e,
        );
        let o = prop::collection::vec(
            (
                val.clone(),
                prop::collection::vec(val.clone(), dw),
                prop::collection::vec(val.clone(), 1),
                prop::collection::vec(val.clone(), 2),
                prop::collection::vec(val, dx),
            ),
            n_o,
        );
        (e, o, prop::collection::vec(any::<bool>(), n_e + n_o)).prop_map(move |(e, o, order)| {
            let mut recs: Vec<UnitRecord> = e
                .into_iter()
                .map(|(w, s, a, x)| UnitRecord {
                    y: None,
                    w,
                    z: None,
                    s,
                    a: Some(a),
                    x,
                    g: Sample::Experimental,
                })
                .collect();
            recs.extend(o.into_iter().map(|(y, w, z, s, x)| UnitRecord {
                y: Some(y),
                w,
                z: Some(z),
                s,
                a: None,
                x,
                g: Sample::Observational,
            }));
            // either sample may come first
            recs.sort_by_key(|r| r.is_experimental() ^ order[0]);
            CombinedDataset::new(
                recs,
                Dims {
                    w: dw,
                    z: 1,
                    s: 2,
                    x: dx,
                },
            )
            .unwrap()
        })
    })
}

proptest! {
    #[test]
    fn csv_round_trip(d in dataset_strategy()) {
        let mut buf = Vec::new();
        write_csv_to(&d, &mut buf).unwrap();
        let back = read_csv(buf.as_slice(), &CsvSchema::default()).unwrap();
        prop_assert_eq!(back, d);
    }

    #[test]
    fn split_is_a_partition(d in dataset_strategy()) {
        let (e, o) = split_by_sample(&d);
        prop_assert_eq!(e.len() + o.len(), d.len());
        prop_assert!(e.iter().all(|r| r.a.is_some() && r.y.is_none() && r.z.is_none()));
        prop_assert!(o.iter().all(|r| r.a.is_none() && r.y.is_some() && r.z.is_some()));
        let mut joined: Vec<UnitRecord> = e.into_iter().chain(o).cloned().collect();
        let mut orig = d.records().to_vec();
        let key = |r: &UnitRecord| format!("{r:?}");
        joined.sort_by_key(key);
        orig.sort_by_key(key);
        prop_assert_eq!(joined, orig);
    }
}

#[test]
fn synthetic_data_round_trips_through_a_file() {
    let (d, _) = generate(&DGPConfig::confounded(), 200, 0.4, 8).unwrap();
    let f = tempfile::NamedTempFile::new().unwrap();
    write_csv(&d, f.path()).unwrap();
    assert_eq!(load_csv(f.path(), &CsvSchema::default()).unwrap(), d);
}
