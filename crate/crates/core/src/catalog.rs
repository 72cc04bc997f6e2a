//! Item embedding catalog: synthetic generation, the text file format,
//! and the virtual-to-real action mapping with within-session exclusion.
//!
//! A virtual action â produced by the low-level actor is mapped to the
//! active catalog item maximizing âᵀ·(a_i/‖a_i‖); the chosen item is
//! removed from the session's active set so it cannot be recommended
//! twice. Unit norms are precomputed once at catalog construction.

use std::collections::HashMap;
use std::io::{BufRead, BufWriter, Write};
use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{CoreError, Result};
use crate::numerics::Tensor1;

pub type ItemId = u64;

#[derive(Debug, Clone)]
pub struct Catalog {
    ids: Vec<ItemId>,
    embeddings: Vec<Tensor1>,
    unit_norms: Vec<Tensor1>,
    clusters: Option<Vec<u32>>,
    dim: usize,
    by_id: HashMap<ItemId, u32>,
}

impl Catalog {
    /// Build from (id, embedding) pairs. Ids must be unique and every
    /// embedding nonzero, finite, and of the same dimension.
    pub fn new(items: Vec<(ItemId, Tensor1)>) -> Result<Self> {
        Self::with_clusters(items, None)
    }

    fn with_clusters(
        mut items: Vec<(ItemId, Tensor1)>,
        clusters: Option<Vec<u32>>,
    ) -> Result<Self> {
        if items.is_empty() {
            return Err(CoreError::EmptyInput("catalog"));
        }
        let dim = items[0].1.len();
        // Ascending id order makes "lowest id wins ties" a plain first-max scan.
        let mut order: Vec<usize> = (0..items.len()).collect();
        order.sort_by_key(|&i| items[i].0);
        let clusters = clusters.map(|c| order.iter().map(|&i| c[i]).collect::<Vec<u32>>());
        items = {
            let mut sorted = Vec::with_capacity(items.len());
            let mut taken: Vec<Option<(ItemId, Tensor1)>> = items.into_iter().map(Some).collect();
            for &i in &order {
                sorted.push(taken[i].take().unwrap());
            }
            sorted
        };

        let mut ids = Vec::with_capacity(items.len());
        let mut embeddings = Vec::with_capacity(items.len());
        let mut unit_norms = Vec::with_capacity(items.len());
        let mut by_id = HashMap::with_capacity(items.len());
        for (idx, (id, emb)) in items.into_iter().enumerate() {
            if emb.len() != dim {
                return Err(CoreError::ShapeMismatch {
                    op: "catalog",
                    expected: dim.to_string(),
                    got: emb.len().to_string(),
                });
            }
            if !emb.is_finite() {
                return Err(CoreError::NonFinite("catalog embedding"));
            }
            let unit = emb
                .normalized()
                .map_err(|_| CoreError::DegenerateVector("catalog embedding"))?;
            if by_id.insert(id, idx as u32).is_some() {
                return Err(CoreError::InvalidParameter(format!(
                    "duplicate item id {id}"
                )));
            }
            ids.push(id);
            embeddings.push(emb);
            unit_norms.push(unit);
        }
        Ok(Catalog {
            ids,
            embeddings,
            unit_norms,
            clusters,
            dim,
            by_id,
        })
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn id(&self, index: u32) -> ItemId {
        self.ids[index as usize]
    }

    pub fn index_of(&self, id: ItemId) -> Option<u32> {
        self.by_id.get(&id).copied()
    }

    pub fn embedding(&self, index: u32) -> &Tensor1 {
        &self.embeddings[index as usize]
    }

    pub fn unit(&self, index: u32) -> &Tensor1 {
        &self.unit_norms[index as usize]
    }

    pub fn cluster_of(&self, index: u32) -> Option<u32> {
        self.clusters.as_ref().map(|c| c[index as usize])
    }

    pub fn has_clusters(&self) -> bool {
        self.clusters.is_some()
    }

    /// `<item_id>\t<v1> <v2> … <vd>` per line, after a `d=<dim>` header.
    pub fn save(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path)
            .map_err(|e| CoreError::io(path.display().to_string(), e))?;
        let mut w = BufWriter::new(file);
        let io_err = |e| CoreError::io(path.display().to_string(), e);
        writeln!(w, "d={}", self.dim).map_err(io_err)?;
        for (id, emb) in self.ids.iter().zip(&self.embeddings) {
            let vals: Vec<String> = emb.data().iter().map(|v| format!("{v}")).collect();
            writeln!(w, "{id}\t{}", vals.join(" ")).map_err(io_err)?;
        }
        w.flush().map_err(io_err)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path)
            .map_err(|e| CoreError::io(path.display().to_string(), e))?;
        let reader = std::io::BufReader::new(file);
        let mut lines = reader.lines().enumerate();

        let (_, header) = lines.next().ok_or(CoreError::Parse {
            line: 1,
            msg: "empty catalog file".into(),
        })?;
        let header = header.map_err(|e| CoreError::io(path.display().to_string(), e))?;
        let dim: usize = header
            .strip_prefix("d=")
            .and_then(|s| s.parse().ok())
            .ok_or(CoreError::Parse {
                line: 1,
                msg: format!("expected 'd=<dim>' header, got '{header}'"),
            })?;

        let mut items = Vec::new();
        for (lineno, line) in lines {
            let line = line.map_err(|e| CoreError::io(path.display().to_string(), e))?;
            if line.is_empty() {
                continue;
            }
            let lineno = lineno + 1;
            let (id_str, rest) = line.split_once('\t').ok_or(CoreError::Parse {
                line: lineno,
                msg: "expected '<id>\\t<values>'".into(),
            })?;
            let id: ItemId = id_str.parse().map_err(|_| CoreError::Parse {
                line: lineno,
                msg: format!("bad item id '{id_str}'"),
            })?;
            let vals: Vec<f64> = rest
                .split_whitespace()
                .map(|t| {
                    t.parse::<f64>().map_err(|_| CoreError::Parse {
                        line: lineno,
                        msg: format!("bad value '{t}'"),
                    })
                })
                .collect::<Result<_>>()?;
            if vals.len() != dim {
                return Err(CoreError::Parse {
                    line: lineno,
                    msg: format!("expected {dim} values, got {}", vals.len()),
                });
            }
            items.push((id, Tensor1::from_vec(vals)));
        }
        Catalog::new(items)
    }
}

/// Synthetic catalog: cluster centers uniform on the unit sphere, items
/// scattered around them with Gaussian noise. Deterministic per seed.
pub fn generate_catalog<R: Rng>(
    n_items: usize,
    dim: usize,
    n_clusters: usize,
    noise_sigma: f64,
    rng: &mut R,
) -> Result<Catalog> {
    if dim < 2 {
        return Err(CoreError::InvalidParameter(format!(
            "catalog dim must be >= 2, got {dim}"
        )));
    }
    if n_clusters == 0 || n_items < n_clusters {
        return Err(CoreError::InvalidParameter(format!(
            "need n_items >= n_clusters >= 1, got {n_items} and {n_clusters}"
        )));
    }
    let std_normal = Normal::new(0.0, 1.0).expect("valid normal");
    let noise = Normal::new(0.0, noise_sigma).map_err(|_| {
        CoreError::InvalidParameter(format!("bad noise sigma {noise_sigma}"))
    })?;

    let mut centers = Vec::with_capacity(n_clusters);
    for _ in 0..n_clusters {
        let v = Tensor1::from_vec((0..dim).map(|_| std_normal.sample(rng)).collect());
        centers.push(v.normalized().map_err(|_| CoreError::DegenerateVector("cluster center"))?);
    }

    let mut items = Vec::with_capacity(n_items);
    let mut clusters = Vec::with_capacity(n_items);
    for i in 0..n_items {
        let k = i % n_clusters;
        loop {
            let mut emb = centers[k].clone();
            for v in emb.data_mut() {
                *v += noise.sample(rng);
            }
            if emb.norm() > 0.0 {
                items.push((i as ItemId, emb));
                clusters.push(k as u32);
                break;
            }
        }
    }
    Catalog::with_clusters(items, Some(clusters))
}

/// The not-yet-recommended subset of a catalog for one session.
#[derive(Debug, Clone)]
pub struct ActiveItemSet {
    alive: Vec<bool>,
    n_alive: usize,
}

impl ActiveItemSet {
    pub fn full(catalog: &Catalog) -> Self {
        ActiveItemSet {
            alive: vec![true; catalog.len()],
            n_alive: catalog.len(),
        }
    }

    /// Restrict to the given catalog indices.
    pub fn from_indices(catalog: &Catalog, indices: &[u32]) -> Self {
        let mut alive = vec![false; catalog.len()];
        let mut n = 0;
        for &i in indices {
            if !alive[i as usize] {
                alive[i as usize] = true;
                n += 1;
            }
        }
        ActiveItemSet { alive, n_alive: n }
    }

    pub fn len(&self) -> usize {
        self.n_alive
    }

    pub fn is_empty(&self) -> bool {
        self.n_alive == 0
    }

    pub fn contains(&self, index: u32) -> bool {
        self.alive[index as usize]
    }

    pub fn remove(&mut self, index: u32) {
        if self.alive[index as usize] {
            self.alive[index as usize] = false;
            self.n_alive -= 1;
        }
    }

    pub fn indices(&self) -> impl Iterator<Item = u32> + '_ {
        self.alive
            .iter()
            .enumerate()
            .filter(|(_, &a)| a)
            .map(|(i, _)| i as u32)
    }
}

/// Map a virtual action onto the best active item and consume it.
///
/// Returns the argmax of âᵀ·(a_i/‖a_i‖) over active items (ties to the
/// lowest item id) and removes it from the active set.
pub fn map_action(
    a_hat: &Tensor1,
    catalog: &Catalog,
    active: &mut ActiveItemSet,
) -> Result<(ItemId, u32)> {
    map_action_within(a_hat, catalog, active, None)
}

/// `map_action` restricted to a candidate subset (already-consumed
/// candidates are skipped).
pub fn map_action_within(
    a_hat: &Tensor1,
    catalog: &Catalog,
    active: &mut ActiveItemSet,
    candidates: Option<&[u32]>,
) -> Result<(ItemId, u32)> {
    if active.is_empty() {
        return Err(CoreError::SessionExhausted);
    }
    if a_hat.norm() == 0.0 {
        return Err(CoreError::DegenerateVector("virtual action"));
    }
    fn consider(
        best: &mut Option<(f64, u32)>,
        a_hat: &Tensor1,
        catalog: &Catalog,
        idx: u32,
    ) -> Result<()> {
        let score = a_hat.dot(catalog.unit(idx))?;
        // Strict > keeps the first (lowest-id) maximizer.
        if best.map_or(true, |(s, _)| score > s) {
            *best = Some((score, idx));
        }
        Ok(())
    }

    let mut best: Option<(f64, u32)> = None;
    match candidates {
        Some(cand) => {
            for &idx in cand {
                if active.contains(idx) {
                    consider(&mut best, a_hat, catalog, idx)?;
                }
            }
            // All candidates consumed: fall back to the full active set.
            if best.is_none() {
                for idx in active.indices() {
                    consider(&mut best, a_hat, catalog, idx)?;
                }
            }
        }
        None => {
            for idx in active.indices() {
                consider(&mut best, a_hat, catalog, idx)?;
            }
        }
    }
    let (_, idx) = best.expect("nonempty active set");
    active.remove(idx);
    Ok((catalog.id(idx), idx))
}

/// Top-k active items by cosine to a query vector (ties to lowest id).
/// Returns min(k, |active|) catalog indices, best first.
pub fn recall_candidates(
    query: &Tensor1,
    catalog: &Catalog,
    active: &ActiveItemSet,
    k: usize,
) -> Result<Vec<u32>> {
    if k == 0 {
        return Err(CoreError::InvalidParameter("recall k must be >= 1".into()));
    }
    let mut scored: Vec<(f64, u32)> = Vec::with_capacity(active.len());
    for idx in active.indices() {
        scored.push((query.dot(catalog.unit(idx))?, idx));
    }
    scored.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(&b.1)));
    scored.truncate(k);
    Ok(scored.into_iter().map(|(_, i)| i).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream_rng, Stream};

    fn tiny_catalog() -> Catalog {
        Catalog::new(vec![
            (0, Tensor1::from_slice(&[1.0, 0.0])),
            (1, Tensor1::from_slice(&[0.0, 1.0])),
            (2, Tensor1::from_slice(&[-1.0, 0.0])),
        ])
        .unwrap()
    }

    #[test]
    fn self_map_returns_the_item() {
        let cat = tiny_catalog();
        let mut active = ActiveItemSet::full(&cat);
        let (id, _) = map_action(&Tensor1::from_slice(&[0.0, 1.0]), &cat, &mut active).unwrap();
        assert_eq!(id, 1);
    }

    #[test]
    fn argmax_then_removal() {
        let cat = tiny_catalog();
        let mut active = ActiveItemSet::full(&cat);
        let a_hat = Tensor1::from_slice(&[0.9, 0.1]);
        let (first, _) = map_action(&a_hat, &cat, &mut active).unwrap();
        assert_eq!(first, 0);
        let (second, _) = map_action(&a_hat, &cat, &mut active).unwrap();
        assert_eq!(second, 1);
        let (third, _) = map_action(&a_hat, &cat, &mut active).unwrap();
        assert_eq!(third, 2);
        assert!(matches!(
            map_action(&a_hat, &cat, &mut active),
            Err(CoreError::SessionExhausted)
        ));
    }

    #[test]
    fn scaling_invariance() {
        let cat = tiny_catalog();
        let a = Tensor1::from_slice(&[0.3, -0.8]);
        let mut s1 = ActiveItemSet::full(&cat);
        let mut s2 = ActiveItemSet::full(&cat);
        let (id1, _) = map_action(&a, &cat, &mut s1).unwrap();
        let (id2, _) = map_action(&a.scale(2.0), &cat, &mut s2).unwrap();
        assert_eq!(id1, id2);
    }

    #[test]
    fn zero_action_is_error() {
        let cat = tiny_catalog();
        let mut active = ActiveItemSet::full(&cat);
        assert!(matches!(
            map_action(&Tensor1::zeros(2), &cat, &mut active),
            Err(CoreError::DegenerateVector(_))
        ));
    }

    #[test]
    fn generate_is_deterministic_per_seed() {
        let a = generate_catalog(20, 5, 3, 0.2, &mut stream_rng(3, Stream::Catalog)).unwrap();
        let b = generate_catalog(20, 5, 3, 0.2, &mut stream_rng(3, Stream::Catalog)).unwrap();
        for i in 0..20 {
            assert_eq!(a.embedding(i).data(), b.embedding(i).data());
        }
    }

    #[test]
    fn single_item_catalog() {
        let cat = generate_catalog(1, 4, 1, 0.1, &mut stream_rng(1, Stream::Catalog)).unwrap();
        assert_eq!(cat.len(), 1);
        assert!(cat.embedding(0).norm() > 0.0);
    }

    #[test]
    fn clusters_are_tighter_within_than_across() {
        let cat =
            generate_catalog(1000, 16, 10, 0.15, &mut stream_rng(11, Stream::Catalog)).unwrap();
        let mut within = (0.0, 0usize);
        let mut across = (0.0, 0usize);
        // Sample pairs on a stride to keep the test fast.
        for i in (0..1000).step_by(7) {
            for j in (i + 1..1000).step_by(13) {
                let c = cat.unit(i as u32).dot(cat.unit(j as u32)).unwrap();
                if cat.cluster_of(i as u32) == cat.cluster_of(j as u32) {
                    within = (within.0 + c, within.1 + 1);
                } else {
                    across = (across.0 + c, across.1 + 1);
                }
            }
        }
        let mean_within = within.0 / within.1 as f64;
        let mean_across = across.0 / across.1 as f64;
        assert!(
            mean_within > mean_across,
            "within {mean_within} vs across {mean_across}"
        );
    }

    #[test]
    fn unit_norms_agree_with_embeddings() {
        let cat =
            generate_catalog(50, 8, 5, 0.3, &mut stream_rng(2, Stream::Catalog)).unwrap();
        for i in 0..50u32 {
            let recomputed = cat.embedding(i).normalized().unwrap();
            for (a, b) in recomputed.data().iter().zip(cat.unit(i).data()) {
                assert!((a - b).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn recall_matches_brute_force_and_map_action() {
        let cat =
            generate_catalog(100, 6, 4, 0.4, &mut stream_rng(5, Stream::Catalog)).unwrap();
        let query = Tensor1::from_slice(&[0.3, -0.1, 0.9, 0.0, 0.2, -0.5]);
        let active = ActiveItemSet::full(&cat);

        let got = recall_candidates(&query, &cat, &active, 5).unwrap();
        let mut brute: Vec<(f64, u32)> = (0..100u32)
            .map(|i| (query.dot(cat.unit(i)).unwrap(), i))
            .collect();
        brute.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(&b.1)));
        let want: Vec<u32> = brute.iter().take(5).map(|&(_, i)| i).collect();
        assert_eq!(got, want);

        // k = 1 agrees with map_action when the query is the action.
        let top1 = recall_candidates(&query, &cat, &active, 1).unwrap();
        let mut fresh = ActiveItemSet::full(&cat);
        let (_, picked) = map_action(&query, &cat, &mut fresh).unwrap();
        assert_eq!(top1[0], picked);

        // k >= |active| returns the whole active set.
        let all = recall_candidates(&query, &cat, &active, 1000).unwrap();
        assert_eq!(all.len(), 100);
    }

    #[test]
    fn file_round_trip() {
        let dir = std::env::temp_dir().join(format!("catalog_rt_{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("catalog.tsv");
        let cat =
            generate_catalog(25, 7, 3, 0.2, &mut stream_rng(8, Stream::Catalog)).unwrap();
        cat.save(&path).unwrap();
        let loaded = Catalog::load(&path).unwrap();
        assert_eq!(loaded.len(), cat.len());
        assert_eq!(loaded.dim(), cat.dim());
        for i in 0..25u32 {
            assert_eq!(loaded.id(i), cat.id(i));
            assert_eq!(loaded.embedding(i).data(), cat.embedding(i).data());
        }
        std::fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn loader_rejects_wrong_arity() {
        let dir = std::env::temp_dir().join(format!("catalog_bad_{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("bad.tsv");
        std::fs::write(&path, "d=3\n0\t1.0 2.0\n").unwrap();
        match Catalog::load(&path) {
            Err(CoreError::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected parse error, got {other:?}"),
        }
        std::fs::remove_dir_all(&dir).ok();
    }
}
