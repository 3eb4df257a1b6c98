use haarstab::dyadic::{enumerate_window, DyadicCube};
use haarstab::gridfn::{GridFunction, Mesh, MollifierSpec};

#[test]
fn save_and_load_by_extension() {
    let dir = tempfile::tempdir().unwrap();
    let mesh = Mesh::with_default_window(2, 4).unwrap();
    for (i, idx) in enumerate_window(2, 0, -2, &DyadicCube::unit(2))
        .unwrap()
        .iter()
        .enumerate()
        .step_by(5)
    {
        let f = GridFunction::<f64>::from_haar(idx, &mesh)
            .unwrap()
            .mollify(&MollifierSpec::bump(), 0.125)
            .unwrap();
        for ext in ["csv", "bin"] {
            let path = dir.path().join(format!("f{i}.{ext}"));
            f.save(&path).unwrap();
            let back = GridFunction::<f64>::load(&path).unwrap();
            assert_eq!(back, f, "{ext}");
        }
    }
}

#[test]
fn kernel_table_from_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("k.csv");
    std::fs::write(&path, "# 2x2 table\n1, 2\n3, 4\n").unwrap();
    let psi = MollifierSpec::from_csv_path(&path, 2).unwrap();
    assert_eq!(psi.density(&[-0.5, -0.5]), 1.0);
    assert_eq!(psi.density(&[0.5, -0.5]), 3.0);
    std::fs::write(&path, "1, 2, 3\n").unwrap();
    assert!(MollifierSpec::from_csv_path(&path, 2).is_err());
    assert!(MollifierSpec::from_csv_path(dir.path().join("missing.csv"), 1).is_err());
}
