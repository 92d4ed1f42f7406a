//! Implicit-feedback interaction tables and their preprocessing steps:
//! loading, k-core filtering with common-user intersection, leave-one-out
//! splitting, and negative sampling.

use crate::error::{CoreError, Result};
use crate::rng::stream;
use rand::Rng;
use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt;
use std::path::Path;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DomainTag {
    A,
    B,
}

impl DomainTag {
    pub fn as_str(self) -> &'static str {
        match self {
            DomainTag::A => "A",
            DomainTag::B => "B",
        }
    }

    pub fn code(self) -> u8 {
        match self {
            DomainTag::A => 0,
            DomainTag::B => 1,
        }
    }

    pub fn other(self) -> DomainTag {
        match self {
            DomainTag::A => DomainTag::B,
            DomainTag::B => DomainTag::A,
        }
    }
}

impl fmt::Display for DomainTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Bijection between string keys and dense indices `[0, len)`.
/// Indices follow lexicographic key order.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Vocab {
    keys: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocab {
    pub fn from_keys(mut keys: Vec<String>) -> Self {
        keys.sort();
        keys.dedup();
        let index = keys
            .iter()
            .enumerate()
            .map(|(i, k)| (k.clone(), i))
            .collect();
        Vocab { keys, index }
    }

    pub fn len(&self) -> usize {
        self.keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }

    pub fn key(&self, idx: usize) -> &str {
        &self.keys[idx]
    }

    pub fn keys(&self) -> &[String] {
        &self.keys
    }

    pub fn get(&self, key: &str) -> Option<usize> {
        self.index.get(key).copied()
    }
}

/// Binarized user-item interactions of one domain, with dense vocabularies.
/// Ratings are implicit: every stored record means "interacted".
#[derive(Debug, Clone, PartialEq)]
pub struct InteractionTable {
    pub domain: DomainTag,
    pub users: Vocab,
    pub items: Vocab,
    /// `(user index, item index, timestamp)`, unique pairs, sorted by
    /// `(user key, item key)` which equals index order.
    pub records: Vec<(usize, usize, i64)>,
}

impl InteractionTable {
    /// Build from raw `(user_key, item_key, rating, timestamp)` tuples.
    /// Ratings are binarized away; duplicate pairs collapse to one record
    /// keeping the smallest timestamp.
    pub fn from_raw(
        domain: DomainTag,
        raw: impl IntoIterator<Item = (String, String, f64, i64)>,
    ) -> Result<Self> {
        let mut dedup: BTreeMap<(String, String), i64> = BTreeMap::new();
        for (user, item, _rating, ts) in raw {
            dedup
                .entry((user, item))
                .and_modify(|t| *t = (*t).min(ts))
                .or_insert(ts);
        }
        if dedup.is_empty() {
            return Err(CoreError::EmptyInput("interaction table"));
        }
        let users = Vocab::from_keys(dedup.keys().map(|(u, _)| u.clone()).collect());
        let items = Vocab::from_keys(dedup.keys().map(|(_, i)| i.clone()).collect());
        let mut records: Vec<(usize, usize, i64)> = dedup
            .into_iter()
            .map(|((u, i), ts)| (users.get(&u).unwrap(), items.get(&i).unwrap(), ts))
            .collect();
        records.sort_unstable();
        Ok(InteractionTable {
            domain,
            users,
            items,
            records,
        })
    }

    pub fn num_users(&self) -> usize {
        self.users.len()
    }

    pub fn num_items(&self) -> usize {
        self.items.len()
    }

    pub fn num_interactions(&self) -> usize {
        self.records.len()
    }

    pub fn density(&self) -> f64 {
        self.records.len() as f64 / (self.users.len() as f64 * self.items.len() as f64)
    }

    /// Items interacted per user, ascending.
    pub fn items_by_user(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.users.len()];
        for &(u, i, _) in &self.records {
            out[u].push(i);
        }
        out
    }

    pub fn user_degrees(&self) -> Vec<usize> {
        let mut d = vec![0; self.users.len()];
        for &(u, _, _) in &self.records {
            d[u] += 1;
        }
        d
    }

    pub fn item_degrees(&self) -> Vec<usize> {
        let mut d = vec![0; self.items.len()];
        for &(_, i, _) in &self.records {
            d[i] += 1;
        }
        d
    }

    /// Serialize as the 4-column TSV the loader reads (rating column is
    /// the implicit 1).
    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        for &(u, i, ts) in &self.records {
            out.push_str(self.users.key(u));
            out.push('\t');
            out.push_str(self.items.key(i));
            out.push_str("\t1\t");
            out.push_str(&ts.to_string());
            out.push('\n');
        }
        out
    }

    fn to_keyed(&self) -> Vec<(String, String, i64)> {
        self.records
            .iter()
            .map(|&(u, i, ts)| (self.users.key(u).to_string(), self.items.key(i).to_string(), ts))
            .collect()
    }

    fn from_keyed(domain: DomainTag, keyed: Vec<(String, String, i64)>) -> Result<Self> {
        Self::from_raw(domain, keyed.into_iter().map(|(u, i, ts)| (u, i, 1.0, ts)))
    }
}

/// Load a tab-separated interaction file: `user \t item \t rating \t timestamp`.
pub fn load_interactions(path: &Path, domain: DomainTag) -> Result<InteractionTable> {
    let content = std::fs::read_to_string(path)?;
    parse_interactions(&content, domain)
}

pub fn parse_interactions(content: &str, domain: DomainTag) -> Result<InteractionTable> {
    let mut raw = Vec::new();
    for (lineno, line) in content.lines().enumerate() {
        let line_number = lineno + 1;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 4 {
            return Err(CoreError::Parse {
                line: line_number,
                msg: format!("expected 4 tab-separated fields, got {}", fields.len()),
            });
        }
        let rating: f64 = fields[2].parse().map_err(|_| CoreError::Parse {
            line: line_number,
            msg: format!("rating `{}` is not a number", fields[2]),
        })?;
        let ts: i64 = fields[3].parse().map_err(|_| CoreError::Parse {
            line: line_number,
            msg: format!("timestamp `{}` is not an integer", fields[3]),
        })?;
        raw.push((fields[0].to_string(), fields[1].to_string(), rating, ts));
    }
    if raw.is_empty() {
        return Err(CoreError::EmptyInput("interaction file"));
    }
    InteractionTable::from_raw(domain, raw)
}

/// Iterative k-core filtering of both domains followed by common-user
/// intersection, repeated to a joint fixpoint, so every surviving user and
/// item has degree >= k in its domain and the two user vocabularies are
/// identical.
pub fn kcore_filter(
    table_a: &InteractionTable,
    table_b: &InteractionTable,
    k: usize,
) -> Result<(InteractionTable, InteractionTable)> {
    if k == 0 {
        return Err(CoreError::InvalidArgument("k must be >= 1".into()));
    }
    let mut recs_a = table_a.to_keyed();
    let mut recs_b = table_b.to_keyed();

    loop {
        let removed_a = peel_domain(&mut recs_a, k);
        let removed_b = peel_domain(&mut recs_b, k);
        if recs_a.is_empty() || recs_b.is_empty() {
            return Err(CoreError::FilteredToEmpty);
        }
        let users_a: BTreeSet<&str> = recs_a.iter().map(|(u, _, _)| u.as_str()).collect();
        let users_b: BTreeSet<&str> = recs_b.iter().map(|(u, _, _)| u.as_str()).collect();
        let common: HashSet<String> = users_a
            .intersection(&users_b)
            .map(|s| s.to_string())
            .collect();
        let before = recs_a.len() + recs_b.len();
        recs_a.retain(|(u, _, _)| common.contains(u.as_str()));
        recs_b.retain(|(u, _, _)| common.contains(u.as_str()));
        if recs_a.is_empty() || recs_b.is_empty() {
            return Err(CoreError::FilteredToEmpty);
        }
        let intersect_removed = before != recs_a.len() + recs_b.len();
        if !removed_a && !removed_b && !intersect_removed {
            break;
        }
    }

    Ok((
        InteractionTable::from_keyed(table_a.domain, recs_a)?,
        InteractionTable::from_keyed(table_b.domain, recs_b)?,
    ))
}

/// One domain's peeling loop; returns whether anything was removed.
fn peel_domain(recs: &mut Vec<(String, String, i64)>, k: usize) -> bool {
    let mut removed_any = false;
    loop {
        let mut user_deg: HashMap<&str, usize> = HashMap::new();
        let mut item_deg: HashMap<&str, usize> = HashMap::new();
        for (u, i, _) in recs.iter() {
            *user_deg.entry(u.as_str()).or_insert(0) += 1;
            *item_deg.entry(i.as_str()).or_insert(0) += 1;
        }
        let bad_users: HashSet<String> = user_deg
            .iter()
            .filter(|(_, &d)| d < k)
            .map(|(u, _)| u.to_string())
            .collect();
        let bad_items: HashSet<String> = item_deg
            .iter()
            .filter(|(_, &d)| d < k)
            .map(|(i, _)| i.to_string())
            .collect();
        if bad_users.is_empty() && bad_items.is_empty() {
            return removed_any;
        }
        removed_any = true;
        recs.retain(|(u, i, _)| !bad_users.contains(u.as_str()) && !bad_items.contains(i.as_str()));
        if recs.is_empty() {
            return removed_any;
        }
    }
}

/// Leave-one-out split: exactly one held-out interaction per user.
#[derive(Debug, Clone)]
pub struct SplitSpec {
    pub train: InteractionTable,
    /// `(user index, held-out item index)`, one per user, user-ordered.
    pub test: Vec<(usize, usize)>,
    pub rng_seed: u64,
}

/// Hold out one uniformly chosen interaction per user. Vocabularies are
/// preserved so train/test indices stay aligned.
pub fn leave_one_out_split(table: &InteractionTable, seed: u64) -> Result<SplitSpec> {
    let by_user = table.items_by_user();
    let mut held = Vec::with_capacity(table.num_users());
    for (u, items) in by_user.iter().enumerate() {
        if items.len() < 2 {
            return Err(CoreError::TooFewInteractions {
                user: table.users.key(u).to_string(),
            });
        }
        let mut rng = stream(seed, &["split", table.domain.as_str(), table.users.key(u)]);
        let pick = items[rng.gen_range(0..items.len())];
        held.push((u, pick));
    }
    let held_set: HashSet<(usize, usize)> = held.iter().copied().collect();
    let train_records: Vec<(usize, usize, i64)> = table
        .records
        .iter()
        .filter(|&&(u, i, _)| !held_set.contains(&(u, i)))
        .copied()
        .collect();
    let train = InteractionTable {
        domain: table.domain,
        users: table.users.clone(),
        items: table.items.clone(),
        records: train_records,
    };
    Ok(SplitSpec {
        train,
        test: held,
        rng_seed: seed,
    })
}

/// Per positive record, draw `ratio` items uniformly from the user's
/// non-interacted set. Output labels are all 0.
pub fn sample_negatives(
    table: &InteractionTable,
    ratio: usize,
    seed: u64,
) -> Result<Vec<(usize, usize, u8)>> {
    if ratio == 0 {
        return Err(CoreError::InvalidArgument("ratio must be >= 1".into()));
    }
    let n = table.num_items();
    let by_user = table.items_by_user();
    let complements: Vec<Vec<usize>> = by_user
        .iter()
        .map(|items| {
            let owned: HashSet<usize> = items.iter().copied().collect();
            (0..n).filter(|i| !owned.contains(i)).collect()
        })
        .collect();
    let mut rng = stream(seed, &["negatives", table.domain.as_str()]);
    let mut out = Vec::with_capacity(table.records.len() * ratio);
    for &(u, _, _) in &table.records {
        let pool = &complements[u];
        if pool.is_empty() {
            return Err(CoreError::NoNegativeCandidates {
                user: table.users.key(u).to_string(),
            });
        }
        for _ in 0..ratio {
            out.push((u, pool[rng.gen_range(0..pool.len())], 0u8));
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn raw(tuples: &[(&str, &str, f64, i64)]) -> Vec<(String, String, f64, i64)> {
        tuples
            .iter()
            .map(|(u, i, r, t)| (u.to_string(), i.to_string(), *r, *t))
            .collect()
    }

    #[test]
    fn ratings_are_binarized_and_deduplicated() {
        let t = InteractionTable::from_raw(
            DomainTag::A,
            raw(&[
                ("u1", "i1", 5.0, 10),
                ("u1", "i2", 3.0, 11),
                ("u2", "i1", 1.0, 12),
            ]),
        )
        .unwrap();
        assert_eq!(t.num_interactions(), 3);

        let d = InteractionTable::from_raw(
            DomainTag::A,
            raw(&[("u1", "i1", 5.0, 10), ("u1", "i1", 2.0, 9)]),
        )
        .unwrap();
        assert_eq!(d.num_interactions(), 1);
        assert_eq!(d.records[0].2, 9); // smallest timestamp kept
    }

    #[test]
    fn parse_error_reports_line_number() {
        let err = parse_interactions("u1\ti1\tfive\t0", DomainTag::A).unwrap_err();
        match err {
            CoreError::Parse { line, msg } => {
                assert_eq!(line, 1);
                assert!(msg.contains("five"));
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn empty_file_is_an_error() {
        assert!(matches!(
            parse_interactions("", DomainTag::A),
            Err(CoreError::EmptyInput(_))
        ));
    }

    #[test]
    fn row_order_is_independent_of_input_order() {
        let fwd = parse_interactions("u2\ti1\t1\t5\nu1\ti2\t1\t6\nu1\ti1\t1\t7", DomainTag::A)
            .unwrap();
        let rev = parse_interactions("u1\ti1\t1\t7\nu1\ti2\t1\t6\nu2\ti1\t1\t5", DomainTag::A)
            .unwrap();
        assert_eq!(fwd, rev);
    }

    #[test]
    fn split_requires_two_interactions() {
        let t = InteractionTable::from_raw(
            DomainTag::A,
            raw(&[("u1", "i1", 1.0, 0), ("u2", "i1", 1.0, 0), ("u2", "i2", 1.0, 0)]),
        )
        .unwrap();
        let err = leave_one_out_split(&t, 1).unwrap_err();
        assert!(matches!(err, CoreError::TooFewInteractions { .. }));
    }

    #[test]
    fn split_is_deterministic_and_partitions() {
        let t = InteractionTable::from_raw(
            DomainTag::A,
            raw(&[
                ("u1", "i1", 1.0, 0),
                ("u1", "i2", 1.0, 0),
                ("u1", "i3", 1.0, 0),
                ("u2", "i1", 1.0, 0),
                ("u2", "i3", 1.0, 0),
            ]),
        )
        .unwrap();
        let s1 = leave_one_out_split(&t, 42).unwrap();
        let s2 = leave_one_out_split(&t, 42).unwrap();
        assert_eq!(s1.test, s2.test);
        assert_eq!(s1.train, s2.train);
        assert_eq!(s1.train.num_interactions() + s1.test.len(), t.num_interactions());
        // no overlap
        for &(u, i) in &s1.test {
            assert!(!s1.train.records.iter().any(|&(tu, ti, _)| tu == u && ti == i));
        }
    }

    #[test]
    fn forced_negative_choice() {
        // u1 interacted with 2 of 3 items -> the single remaining item
        let t = InteractionTable::from_raw(
            DomainTag::A,
            raw(&[
                ("u1", "i1", 1.0, 0),
                ("u1", "i2", 1.0, 0),
                ("u2", "i3", 1.0, 0),
            ]),
        )
        .unwrap();
        let negs = sample_negatives(&t, 1, 7).unwrap();
        assert_eq!(negs.len(), t.num_interactions());
        let i3 = t.items.get("i3").unwrap();
        for &(u, i, label) in negs.iter().filter(|(u, _, _)| *u == 0) {
            assert_eq!((u, i, label), (0, i3, 0));
        }
    }

    #[test]
    fn user_with_every_item_errors() {
        let t = InteractionTable::from_raw(
            DomainTag::A,
            raw(&[("u1", "i1", 1.0, 0), ("u1", "i2", 1.0, 0), ("u2", "i1", 1.0, 0)]),
        )
        .unwrap();
        assert!(matches!(
            sample_negatives(&t, 1, 7),
            Err(CoreError::NoNegativeCandidates { .. })
        ));
    }
}
