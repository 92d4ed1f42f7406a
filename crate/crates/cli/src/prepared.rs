//! The prepared dataset directory: filtered train/test splits, frozen
//! evaluation candidates, and aligned feature tables, one subdirectory per
//! domain.

use p2rec_core::data::{
    load_interactions, DomainTag, FeatureTable, InteractionTable, SplitSpec, Vocab,
};
use p2rec_core::train::DomainData;
use std::error::Error;
use std::path::{Path, PathBuf};

pub type CliResult<T> = Result<T, Box<dyn Error>>;

pub fn domain_dir(prepared: &Path, tag: DomainTag) -> PathBuf {
    prepared.join(match tag {
        DomainTag::A => "domain_a",
        DomainTag::B => "domain_b",
    })
}

/// Write one domain's split, candidates, and features.
pub fn write_domain(
    prepared: &Path,
    table: &InteractionTable,
    split: &SplitSpec,
    candidates: &[Vec<usize>],
    review: Option<&FeatureTable>,
    text: Option<&FeatureTable>,
    visual: Option<&FeatureTable>,
) -> CliResult<()> {
    let dir = domain_dir(prepared, table.domain);
    std::fs::create_dir_all(&dir)?;
    std::fs::write(dir.join("train.tsv"), split.train.to_tsv())?;

    let mut test_text = String::new();
    let mut cand_text = String::new();
    for (row, &(u, i)) in split.test.iter().enumerate() {
        let user = table.users.key(u);
        let item = table.items.key(i);
        test_text.push_str(&format!("{user}\t{item}\n"));
        let negs: Vec<&str> = candidates[row]
            .iter()
            .map(|&n| table.items.key(n))
            .collect();
        cand_text.push_str(&format!("{user}\t{item}\t{}\n", negs.join(",")));
    }
    std::fs::write(dir.join("test.tsv"), test_text)?;
    std::fs::write(dir.join("candidates.tsv"), cand_text)?;

    for (name, feature) in [("review", review), ("text", text), ("visual", visual)] {
        if let Some(f) = feature {
            let aligned = match f.entity {
                p2rec_core::data::EntityKind::User => f.aligned_to(&table.users)?,
                p2rec_core::data::EntityKind::Item => f.aligned_to(&table.items)?,
            };
            aligned.write_file(&dir.join(format!("{name}.p2ft")))?;
        }
    }
    Ok(())
}

fn read_feature(dir: &Path, name: &str) -> CliResult<Option<FeatureTable>> {
    let path = dir.join(format!("{name}.p2ft"));
    if path.exists() {
        Ok(Some(FeatureTable::read_file(&path)?))
    } else {
        Ok(None)
    }
}

fn lookup(vocab: &Vocab, key: &str, what: &str) -> CliResult<usize> {
    vocab
        .get(key)
        .ok_or_else(|| format!("{what} key `{key}` not in vocabulary").into())
}

/// Load one domain back into the trainer's working form.
pub fn load_domain(prepared: &Path, tag: DomainTag, seed: u64) -> CliResult<DomainData> {
    let dir = domain_dir(prepared, tag);
    if !dir.join("train.tsv").exists() {
        return Err(format!(
            "prepared dataset not found at {} (run `prepare` first)",
            dir.display()
        )
        .into());
    }
    let train = load_interactions(&dir.join("train.tsv"), tag)?;
    let mut test = Vec::new();
    let mut candidates = Vec::new();
    let test_text = std::fs::read_to_string(dir.join("test.tsv"))?;
    for line in test_text.lines().filter(|l| !l.trim().is_empty()) {
        let (user, item) = line
            .split_once('\t')
            .ok_or_else(|| format!("bad test line `{line}`"))?;
        test.push((
            lookup(&train.users, user, "test user")?,
            lookup(&train.items, item, "test item")?,
        ));
    }
    let cand_text = std::fs::read_to_string(dir.join("candidates.tsv"))?;
    for (row, line) in cand_text
        .lines()
        .filter(|l| !l.trim().is_empty())
        .enumerate()
    {
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 3 {
            return Err(format!("bad candidates line `{line}`").into());
        }
        let user = lookup(&train.users, fields[0], "candidate user")?;
        let item = lookup(&train.items, fields[1], "candidate item")?;
        if test.get(row) != Some(&(user, item)) {
            return Err(format!("candidates row {row} does not match test row").into());
        }
        let negs: Vec<usize> = fields[2]
            .split(',')
            .map(|k| lookup(&train.items, k.trim(), "candidate negative"))
            .collect::<CliResult<_>>()?;
        candidates.push(negs);
    }

    let review = read_feature(&dir, "review")?;
    let text = read_feature(&dir, "text")?;
    let visual = read_feature(&dir, "visual")?;
    Ok(DomainData::from_parts(
        train,
        test,
        candidates,
        review.as_ref(),
        text.as_ref(),
        visual.as_ref(),
        seed,
    )?)
}
