use std::ffi::{CStr, CString};
use std::ptr;

use archsearch_ffi::*;

fn last_error() -> String {
    unsafe { CStr::from_ptr(as_last_error()) }.to_string_lossy().into_owned()
}

struct Space(*mut AsSpace);

impl Space {
    fn new(name: &str) -> Self {
        let name = CString::new(name).unwrap();
        let mut p = ptr::null_mut();
        assert_eq!(unsafe { as_space_new(name.as_ptr(), &mut p) }, AsStatus::AsOk);
        Space(p)
    }
}

impl Drop for Space {
    fn drop(&mut self) {
        unsafe { as_space_free(self.0) }
    }
}

#[test]
fn space_queries() {
    let s = Space::new("default");
    let mut dim = 0usize;
    assert_eq!(unsafe { as_space_one_hot_dim(s.0, &mut dim) }, AsStatus::AsOk);
    assert_eq!(dim, 105);
    let c = Space::new("compact");
    let mut n = 0u64;
    assert_eq!(unsafe { as_space_cardinality(c.0, &mut n) }, AsStatus::AsOk);
    assert_eq!(n, 131_072);
    let bad = CString::new("nowhere").unwrap();
    let mut p = ptr::null_mut();
    assert_eq!(unsafe { as_space_new(bad.as_ptr(), &mut p) }, AsStatus::AsErrInvalidArgument);
    assert!(p.is_null());
    assert!(last_error().contains("nowhere"));
}

#[test]
fn null_pointers_are_reported_not_dereferenced() {
    let mut dim = 0usize;
    assert_eq!(unsafe { as_space_one_hot_dim(ptr::null(), &mut dim) }, AsStatus::AsErrNullPointer);
    assert!(last_error().contains("space"));
    let s = Space::new("default");
    assert_eq!(unsafe { as_space_one_hot_dim(s.0, ptr::null_mut()) }, AsStatus::AsErrNullPointer);
    unsafe {
        as_space_free(ptr::null_mut());
        as_table_free(ptr::null_mut());
        as_model_free(ptr::null_mut());
    }
}

#[test]
fn genotypes_round_trip_through_the_abi() {
    let s = Space::new("default");
    let mut genes = vec![0u8; 3 * AS_GENOTYPE_LEN];
    assert_eq!(unsafe { as_genotype_random(s.0, 5, 3, genes.as_mut_ptr()) }, AsStatus::AsOk);
    for g in genes.chunks(AS_GENOTYPE_LEN) {
        assert_eq!(unsafe { as_genotype_validate(s.0, g.as_ptr()) }, AsStatus::AsOk);
        let mut c = [0u8; AS_GENOTYPE_LEN];
        assert_eq!(unsafe { as_genotype_canonicalize(s.0, g.as_ptr(), c.as_mut_ptr()) }, AsStatus::AsOk);
        assert_eq!(&c[..], g);
        let mut oh = vec![0.0; 105];
        assert_eq!(unsafe { as_genotype_one_hot(s.0, g.as_ptr(), oh.as_mut_ptr(), oh.len()) }, AsStatus::AsOk);
        assert_eq!(oh.iter().sum::<f64>(), 29.0);
        assert_eq!(unsafe { as_genotype_one_hot(s.0, g.as_ptr(), oh.as_mut_ptr(), 10) }, AsStatus::AsErrInvalidArgument);
    }
    let mut again = vec![0u8; 3 * AS_GENOTYPE_LEN];
    unsafe { as_genotype_random(s.0, 5, 3, again.as_mut_ptr()) };
    assert_eq!(genes, again);

    let mut bad = [0u8; AS_GENOTYPE_LEN];
    bad[0] = 9;
    assert_eq!(unsafe { as_genotype_validate(s.0, bad.as_ptr()) }, AsStatus::AsErrInvalidArgument);
    assert!(last_error().contains("genotype 0"));
}

#[test]
fn table_and_accuracy_match_the_library() {
    let s = Space::new("default");
    let mut t = ptr::null_mut();
    assert_eq!(unsafe { as_table_synthetic(s.0, &mut t) }, AsStatus::AsOk);
    let space = archsearch::SearchSpace::default();
    let table = archsearch::LatencyTable::synthetic(&space);
    let gs = [archsearch::Genotype::minimum(&space), archsearch::Genotype::maximum(&space)];
    let flat: Vec<u8> = gs.iter().flat_map(|g| g.0).collect();
    let mut lat = [0.0; 2];
    assert_eq!(unsafe { as_table_predict(t, s.0, flat.as_ptr(), 2, lat.as_mut_ptr()) }, AsStatus::AsOk);
    for (g, l) in gs.iter().zip(lat) {
        assert_eq!(l, table.predict(&space, g).unwrap());
        let mut acc = 0.0;
        assert_eq!(unsafe { as_synthetic_accuracy(s.0, g.0.as_ptr(), &mut acc) }, AsStatus::AsOk);
        assert_eq!(acc, archsearch::evaluator::synthetic_accuracy(&space, g).unwrap());
    }

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("t.lut");
    table.save(&path).unwrap();
    let cpath = CString::new(path.to_str().unwrap()).unwrap();
    let mut loaded = ptr::null_mut();
    assert_eq!(unsafe { as_table_load(s.0, cpath.as_ptr(), &mut loaded) }, AsStatus::AsOk);
    let mut lat2 = [0.0; 2];
    unsafe { as_table_predict(loaded, s.0, flat.as_ptr(), 2, lat2.as_mut_ptr()) };
    assert_eq!(lat, lat2);
    let missing = CString::new("/no/such/table").unwrap();
    let mut none = ptr::null_mut();
    assert_eq!(unsafe { as_table_load(s.0, missing.as_ptr(), &mut none) }, AsStatus::AsErrIo);
    unsafe {
        as_table_free(t);
        as_table_free(loaded);
    }
}

#[test]
fn model_train_predict_save_load() {
    let s = Space::new("default");
    let space = archsearch::SearchSpace::default();
    let n = 40;
    let mut genes = vec![0u8; n * AS_GENOTYPE_LEN];
    unsafe { as_genotype_random(s.0, 1, n, genes.as_mut_ptr()) };
    let acc: Vec<f64> = genes
        .chunks(AS_GENOTYPE_LEN)
        .map(|c| archsearch::evaluator::synthetic_accuracy(&space, &archsearch::Genotype(c.try_into().unwrap())).unwrap())
        .collect();
    let cfg = CString::new("epochs = 5\nsynthetic = false").unwrap();
    let mut m = ptr::null_mut();
    assert_eq!(unsafe { as_model_train(s.0, genes.as_ptr(), acc.as_ptr(), n, cfg.as_ptr(), 3, &mut m) }, AsStatus::AsOk);
    let mut pred = vec![0.0; n];
    assert_eq!(unsafe { as_model_predict(m, s.0, genes.as_ptr(), n, pred.as_mut_ptr()) }, AsStatus::AsOk);
    assert!(pred.iter().all(|p| *p > 0.0 && *p < 1.0));

    let dir = tempfile::tempdir().unwrap();
    let path = CString::new(dir.path().join("m.bin").to_str().unwrap()).unwrap();
    assert_eq!(unsafe { as_model_save(m, path.as_ptr()) }, AsStatus::AsOk);
    let mut back = ptr::null_mut();
    assert_eq!(unsafe { as_model_load(path.as_ptr(), &mut back) }, AsStatus::AsOk);
    let mut pred2 = vec![0.0; n];
    unsafe { as_model_predict(back, s.0, genes.as_ptr(), n, pred2.as_mut_ptr()) };
    assert_eq!(pred, pred2);

    let bad_cfg = CString::new("epochs = \"many\"").unwrap();
    let mut none = ptr::null_mut();
    assert_eq!(unsafe { as_model_train(s.0, genes.as_ptr(), acc.as_ptr(), n, bad_cfg.as_ptr(), 3, &mut none) }, AsStatus::AsErrParse);
    let flat = vec![0.5; n];
    assert_eq!(unsafe { as_model_train(s.0, genes.as_ptr(), flat.as_ptr(), n, ptr::null(), 3, &mut none) }, AsStatus::AsErrRuntime);
    unsafe {
        as_model_free(m);
        as_model_free(back);
    }
}

#[test]
fn metrics_and_ks() {
    let pts = [1.0, 3.0, 2.0, 2.0, 3.0, 1.0];
    let mut hv = 0.0;
    assert_eq!(unsafe { as_hypervolume_2d(pts.as_ptr(), 3, 0.0, 0.0, &mut hv) }, AsStatus::AsOk);
    assert_eq!(hv, 6.0);
    assert_eq!(unsafe { as_hypervolume_2d(pts.as_ptr(), 3, 2.0, 0.0, &mut hv) }, AsStatus::AsErrInvalidArgument);

    let cm = [3u64, 1, 1, 3];
    let mut m = 0.0;
    assert_eq!(unsafe { as_miou(cm.as_ptr(), 2, &mut m) }, AsStatus::AsOk);
    assert_eq!(m, 0.6);

    let a = [1.0, 2.0, 3.0, 4.0];
    let b = [1.0, 3.0, 2.0, 4.0];
    let mut tau = 0.0;
    assert_eq!(unsafe { as_kendall_tau(a.as_ptr(), b.as_ptr(), 4, &mut tau) }, AsStatus::AsOk);
    assert!((tau - 4.0 / 6.0).abs() < 1e-12);

    let lat = [10.0, 11.0, 12.0, 20.0, 30.0];
    let mut d = 0.0;
    assert_eq!(unsafe { as_ks_statistic(lat.as_ptr(), 5, 10.0, 30.0, &mut d) }, AsStatus::AsOk);
    let mut mask = [0u8; 5];
    assert_eq!(unsafe { as_subset_select_ks(lat.as_ptr(), 5, 3, 10.0, 30.0, 0, mask.as_mut_ptr()) }, AsStatus::AsOk);
    assert_eq!(mask, [1, 0, 0, 1, 1]);
}

#[test]
fn search_runs_from_a_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = dir.path().join("c.toml");
    std::fs::write(
        &cfg_path,
        "space = \"compact\"\ninitial_population = 20\ngenerations = 2\nper_generation = 3\ntrain.epochs = 5\nmoea.generations = 5\nmoea.population = 20\n",
    )
    .unwrap();
    let src = CString::new(cfg_path.to_str().unwrap()).unwrap();
    let out = CString::new(dir.path().join("run").to_str().unwrap()).unwrap();
    let (mut evals, mut hv) = (0usize, 0.0);
    assert_eq!(unsafe { as_search_run(src.as_ptr(), out.as_ptr(), &mut evals, &mut hv) }, AsStatus::AsOk);
    assert_eq!(evals, 26);
    assert!(hv > 0.0);
    let archive = archsearch::Archive::load(&dir.path().join("run/archive.csv")).unwrap();
    assert_eq!(archive.len(), 26);
    assert_eq!(archive.hypervolume(), hv);
}

#[test]
fn version_is_the_crate_version() {
    let v = unsafe { CStr::from_ptr(as_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}
