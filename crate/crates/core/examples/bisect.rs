use std::collections::BTreeMap;
use std::sync::Arc;
use anyonic_core::entropy::spectrum;
use anyonic_core::model::{builtin_model, ChargeSlot};
use anyonic_core::ops::*;
use anyonic_core::oracle::check_defining_property;
use anyonic_core::reduce::*;
use anyonic_core::tree::enumerate_labellings;
use anyonic_core::C64;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

fn main() {
    let model = Arc::new(builtin_model("fibonacci", None).unwrap());
    let tau = model.charge_by_label("tau").unwrap();
    let anyons: Vec<_> = (1..=5).map(|i| (format!("x{i}"), ChargeSlot::Fixed(tau))).collect();
    let geometry = Arc::new(SystemGeometry::new(model.clone(), Manifold::Disc, anyons, BoundarySpec::Fixed(anyonic_core::model::Charge(0))).unwrap());
    let mut rng = ChaCha8Rng::seed_from_u64(23);

    for (tag, word) in [
        ("reference", BraidWord::identity()),
        ("one letter", BraidWord(vec![BraidLetter{position:2,sign:1}])),
        ("scrambled", BraidWord(vec![
            BraidLetter { position: 2, sign: 1 },
            BraidLetter { position: 3, sign: -1 },
            BraidLetter { position: 1, sign: 1 },
            BraidLetter { position: 4, sign: 1 },
        ])),
    ] {
        let basis = geometry.reference_descriptor().after(&word, &geometry).unwrap();
        let tree = geometry.tree_in_basis(&basis).unwrap();
        let dim = enumerate_labellings(geometry.model(), &tree).len();
        let mut amp: Vec<C64> = (0..dim).map(|_| C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect();
        let norm: f64 = amp.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
        for v in &mut amp { *v /= norm; }
        let psi = AnyonicState::from_dense(geometry.clone(), basis, &amp).unwrap();
        let rho = outer_product(&psi, &psi).unwrap();
        for ids in [vec!["x1","x2"], vec!["x2","x3","x4"], vec!["x1","x5"]] {
            let mut region_of = BTreeMap::new();
            for (id, _) in geometry.anyons() {
                region_of.insert(id.clone(), if ids.contains(&id.as_str()) { Region::A } else { Region::B });
            }
            let part = Bipartition::new(region_of, Some(Region::B));
            let ra = reduced_density_matrix(&rho, &part, Region::A).unwrap();
            let rb = reduced_density_matrix(&rho, &part, Region::B).unwrap();
            let da = check_defining_property(&rho, &ra, &part, Region::A).unwrap();
            let db = check_defining_property(&rho, &rb, &part, Region::B).unwrap();
            let pa: Vec<f64> = spectrum(&ra).unwrap().iter().flat_map(|s| s.eigenvalues.clone()).filter(|&p| p>1e-10).collect();
            let pb: Vec<f64> = spectrum(&rb).unwrap().iter().flat_map(|s| s.eigenvalues.clone()).filter(|&p| p>1e-10).collect();
            let mut sa = pa.clone(); sa.sort_by(|a,b| b.partial_cmp(a).unwrap());
            let mut sb = pb.clone(); sb.sort_by(|a,b| b.partial_cmp(a).unwrap());
            let comp = sa.len()==sb.len() && sa.iter().zip(sb.iter()).all(|(x,y)| (x-y).abs()<1e-10);
            println!("{tag:10} A={ids:?}: contractA={da:.2e} contractB={db:.2e} complementarity={comp}");
        }
    }
}
