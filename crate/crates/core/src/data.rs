//! Triple files, vocabularies and the KvsAll / filter indices.
//!
//! A dataset directory holds `train.txt`, `valid.txt` and `test.txt`, one
//! `head<TAB>relation<TAB>tail` triple per line. Every relation `k` gets an
//! inverse `k + |R|`, so head prediction becomes tail prediction on
//! `(t, k + |R|)`.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Valid,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Valid, Split::Test];

    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Valid => "valid",
            Split::Test => "test",
        }
    }

    fn index(self) -> usize {
        self as usize
    }
}

impl std::str::FromStr for Split {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "train" => Ok(Split::Train),
            "valid" | "validation" => Ok(Split::Valid),
            "test" => Ok(Split::Test),
            other => Err(format!("unknown split '{other}' (expected train, valid or test)")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Triple {
    pub head: usize,
    pub relation: usize,
    pub tail: usize,
}

impl Triple {
    pub fn new(head: usize, relation: usize, tail: usize) -> Self {
        Triple { head, relation, tail }
    }
}

/// Entity and relation names with dense ids in first-appearance order.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "VocabNames", into = "VocabNames")]
pub struct Vocab {
    entities: Vec<String>,
    relations: Vec<String>,
    entity_ids: HashMap<String, usize>,
    relation_ids: HashMap<String, usize>,
}

#[derive(Serialize, Deserialize)]
struct VocabNames {
    entities: Vec<String>,
    relations: Vec<String>,
}

impl From<VocabNames> for Vocab {
    fn from(names: VocabNames) -> Self {
        let mut vocab = Vocab::default();
        for e in &names.entities {
            vocab.intern_entity(e);
        }
        for r in &names.relations {
            vocab.intern_relation(r);
        }
        vocab
    }
}

impl From<Vocab> for VocabNames {
    fn from(vocab: Vocab) -> Self {
        VocabNames { entities: vocab.entities, relations: vocab.relations }
    }
}

impl Vocab {
    pub fn intern_entity(&mut self, name: &str) -> usize {
        intern(&mut self.entities, &mut self.entity_ids, name)
    }

    pub fn intern_relation(&mut self, name: &str) -> usize {
        intern(&mut self.relations, &mut self.relation_ids, name)
    }

    pub fn num_entities(&self) -> usize {
        self.entities.len()
    }

    /// Number of original relations, `|R|`.
    pub fn num_relations(&self) -> usize {
        self.relations.len()
    }

    /// Relation rows including inverses, `2|R|`.
    pub fn num_relation_rows(&self) -> usize {
        2 * self.relations.len()
    }

    pub fn inverse(&self, relation: usize) -> usize {
        let n = self.relations.len();
        if relation < n {
            relation + n
        } else {
            relation - n
        }
    }

    pub fn entity_id(&self, name: &str) -> Option<usize> {
        self.entity_ids.get(name).copied()
    }

    pub fn relation_id(&self, name: &str) -> Option<usize> {
        self.relation_ids.get(name).copied()
    }

    pub fn entity_name(&self, id: usize) -> &str {
        &self.entities[id]
    }

    /// Name of a relation row; inverse rows get an `_inverse` suffix.
    pub fn relation_name(&self, id: usize) -> String {
        let n = self.relations.len();
        if id < n {
            self.relations[id].clone()
        } else {
            format!("{}_inverse", self.relations[id - n])
        }
    }
}

fn intern(names: &mut Vec<String>, ids: &mut HashMap<String, usize>, name: &str) -> usize {
    if let Some(&id) = ids.get(name) {
        return id;
    }
    let id = names.len();
    names.push(name.to_owned());
    ids.insert(name.to_owned(), id);
    id
}

/// Query `(entity, relation row)` to the sorted set of its answers.
pub type AnswerIndex = BTreeMap<(usize, usize), Vec<usize>>;

#[derive(Clone, Debug)]
pub struct TripleStore {
    vocab: Vocab,
    splits: [Vec<Triple>; 3],
    kvsall: [AnswerIndex; 3],
    filter: AnswerIndex,
}

impl TripleStore {
    /// Builds a store from id triples over original relations `< vocab.num_relations()`.
    pub fn new(vocab: Vocab, train: Vec<Triple>, valid: Vec<Triple>, test: Vec<Triple>) -> Result<Self> {
        let splits = [train, valid, test];
        for triples in &splits {
            for t in triples {
                check_id("entity", t.head, vocab.num_entities())?;
                check_id("entity", t.tail, vocab.num_entities())?;
                check_id("relation", t.relation, vocab.num_relations())?;
            }
        }
        let kvsall =
            [answer_index(&vocab, &splits[0]), answer_index(&vocab, &splits[1]), answer_index(&vocab, &splits[2])];
        let mut filter: BTreeMap<(usize, usize), BTreeSet<usize>> = BTreeMap::new();
        for index in &kvsall {
            for (&key, tails) in index {
                filter.entry(key).or_default().extend(tails.iter().copied());
            }
        }
        let filter = filter.into_iter().map(|(k, v)| (k, v.into_iter().collect())).collect();
        Ok(TripleStore { vocab, splits, kvsall, filter })
    }

    /// Builds a store from named triples; ids are assigned in first-appearance
    /// order over train, then valid, then test.
    pub fn from_named<S: AsRef<str>>(train: &[[S; 3]], valid: &[[S; 3]], test: &[[S; 3]]) -> Result<Self> {
        let mut vocab = Vocab::default();
        let mut intern_all = |rows: &[[S; 3]]| -> Vec<Triple> {
            rows.iter()
                .map(|[h, r, t]| {
                    let head = vocab.intern_entity(h.as_ref());
                    let relation = vocab.intern_relation(r.as_ref());
                    let tail = vocab.intern_entity(t.as_ref());
                    Triple::new(head, relation, tail)
                })
                .collect()
        };
        let train = intern_all(train);
        let valid = intern_all(valid);
        let test = intern_all(test);
        Self::new(vocab, train, valid, test)
    }

    pub fn vocab(&self) -> &Vocab {
        &self.vocab
    }

    pub fn num_entities(&self) -> usize {
        self.vocab.num_entities()
    }

    pub fn num_relation_rows(&self) -> usize {
        self.vocab.num_relation_rows()
    }

    /// Original triples of a split, in file order, duplicates included.
    pub fn triples(&self, split: Split) -> &[Triple] {
        &self.splits[split.index()]
    }

    /// KvsAll index of a split, inverse queries included.
    pub fn kvsall(&self, split: Split) -> &AnswerIndex {
        &self.kvsall[split.index()]
    }

    /// Known answers to `(entity, relation row)` over all splits.
    pub fn known_answers(&self, entity: usize, relation: usize) -> &[usize] {
        self.filter.get(&(entity, relation)).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn filter(&self) -> &AnswerIndex {
        &self.filter
    }

    /// SHA-256 over the named triples of all splits, in order.
    pub fn fingerprint(&self) -> String {
        let mut hasher = Sha256::new();
        for split in Split::ALL {
            hasher.update(split.name().as_bytes());
            hasher.update([0u8]);
            for t in self.triples(split) {
                for field in
                    [self.vocab.entity_name(t.head), &self.vocab.relations[t.relation], self.vocab.entity_name(t.tail)]
                {
                    hasher.update(field.as_bytes());
                    hasher.update(*b"\t");
                }
                hasher.update(*b"\n");
            }
        }
        hex::encode(hasher.finalize())
    }

    /// Renders a split back into `head<TAB>relation<TAB>tail` lines.
    pub fn to_lines(&self, split: Split) -> Vec<String> {
        self.triples(split)
            .iter()
            .map(|t| {
                format!(
                    "{}\t{}\t{}",
                    self.vocab.entity_name(t.head),
                    self.vocab.relations[t.relation],
                    self.vocab.entity_name(t.tail)
                )
            })
            .collect()
    }

    pub fn stats(&self) -> DatasetStats {
        let train_entities: BTreeSet<usize> =
            self.triples(Split::Train).iter().flat_map(|t| [t.head, t.tail]).collect();
        let unseen = |split: Split| {
            self.triples(split)
                .iter()
                .flat_map(|t| [t.head, t.tail])
                .filter(|e| !train_entities.contains(e))
                .collect::<BTreeSet<_>>()
                .len()
        };
        DatasetStats {
            num_entities: self.vocab.num_entities(),
            num_relations: self.vocab.num_relations(),
            train: self.triples(Split::Train).len(),
            valid: self.triples(Split::Valid).len(),
            test: self.triples(Split::Test).len(),
            train_queries: self.kvsall(Split::Train).len(),
            valid_queries: self.kvsall(Split::Valid).len(),
            test_queries: self.kvsall(Split::Test).len(),
            max_train_answers: self.kvsall(Split::Train).values().map(Vec::len).max().unwrap_or(0),
            duplicate_train_triples: self.triples(Split::Train).len()
                - self.triples(Split::Train).iter().collect::<BTreeSet<_>>().len(),
            valid_entities_unseen_in_train: unseen(Split::Valid),
            test_entities_unseen_in_train: unseen(Split::Test),
        }
    }
}

fn check_id(kind: &'static str, id: usize, size: usize) -> Result<()> {
    if id >= size {
        return Err(Error::IdOutOfRange { kind, id, size });
    }
    Ok(())
}

fn answer_index(vocab: &Vocab, triples: &[Triple]) -> AnswerIndex {
    let mut index: BTreeMap<(usize, usize), BTreeSet<usize>> = BTreeMap::new();
    for t in triples {
        index.entry((t.head, t.relation)).or_default().insert(t.tail);
        index.entry((t.tail, vocab.inverse(t.relation))).or_default().insert(t.head);
    }
    index.into_iter().map(|(k, v)| (k, v.into_iter().collect())).collect()
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub num_entities: usize,
    pub num_relations: usize,
    pub train: usize,
    pub valid: usize,
    pub test: usize,
    /// Distinct `(head, relation)` queries, inverse direction included.
    pub train_queries: usize,
    pub valid_queries: usize,
    pub test_queries: usize,
    pub max_train_answers: usize,
    pub duplicate_train_triples: usize,
    pub valid_entities_unseen_in_train: usize,
    pub test_entities_unseen_in_train: usize,
}

fn read_split(path: &Path) -> Result<Vec<[String; 3]>> {
    if !path.is_file() {
        return Err(Error::MissingFile(path.to_owned()));
    }
    let text = fs::read_to_string(path)?;
    let mut rows = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        let malformed = |reason: String| Error::MalformedLine { path: path.to_owned(), line: i + 1, reason };
        let fields: Vec<&str> = line.split('\t').map(str::trim).collect();
        if fields.len() != 3 {
            return Err(malformed(format!("expected 3 tab-separated fields, found {}", fields.len())));
        }
        if fields.iter().any(|f| f.is_empty()) {
            return Err(malformed("empty field".into()));
        }
        rows.push([fields[0].to_owned(), fields[1].to_owned(), fields[2].to_owned()]);
    }
    Ok(rows)
}

/// Loads `train.txt`, `valid.txt` and `test.txt` from `dir`.
pub fn load_dataset(dir: impl AsRef<Path>) -> Result<TripleStore> {
    let dir = dir.as_ref();
    let path = |split: Split| -> PathBuf { dir.join(format!("{}.txt", split.name())) };
    let train = read_split(&path(Split::Train))?;
    let valid = read_split(&path(Split::Valid))?;
    let test = read_split(&path(Split::Test))?;
    TripleStore::from_named(&train, &valid, &test)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn named(rows: &[(&str, &str, &str)]) -> Vec<[String; 3]> {
        rows.iter().map(|(h, r, t)| [h.to_string(), r.to_string(), t.to_string()]).collect()
    }

    #[test]
    fn ids_follow_first_appearance() {
        let store = TripleStore::from_named(
            &named(&[("b", "likes", "a"), ("a", "knows", "c")]),
            &named(&[("d", "likes", "b")]),
            &[] as &[[String; 3]],
        )
        .unwrap();
        let v = store.vocab();
        assert_eq!(v.entity_id("b"), Some(0));
        assert_eq!(v.entity_id("a"), Some(1));
        assert_eq!(v.entity_id("c"), Some(2));
        assert_eq!(v.entity_id("d"), Some(3));
        assert_eq!(v.relation_id("knows"), Some(1));
        assert_eq!(v.inverse(1), 3);
        assert_eq!(v.inverse(3), 1);
        assert_eq!(v.relation_name(2), "likes_inverse");
    }

    #[test]
    fn duplicates_collapse_in_kvsall_only() {
        let rows = named(&[("a", "r", "b"), ("a", "r", "b")]);
        let store = TripleStore::from_named(&rows, &[], &[]).unwrap();
        assert_eq!(store.triples(Split::Train).len(), 2);
        assert_eq!(store.kvsall(Split::Train)[&(0, 0)], vec![1]);
        let stats = store.stats();
        assert_eq!(stats.train, 2);
        assert_eq!(stats.duplicate_train_triples, 1);
        assert_eq!(stats.train_queries, 2);
    }

    #[test]
    fn shared_query_counts_inverse_direction() {
        let rows = named(&[("a", "r", "b"), ("a", "r", "c"), ("a", "r", "d")]);
        let store = TripleStore::from_named(&rows, &[], &[]).unwrap();
        let stats = store.stats();
        assert_eq!(stats.train_queries, 4);
        assert_eq!(stats.max_train_answers, 3);
        assert_eq!(stats.valid, 0);
        assert_eq!(stats.valid_queries, 0);
    }

    #[test]
    fn filter_is_union_of_splits() {
        let store =
            TripleStore::from_named(&named(&[("a", "r", "b")]), &named(&[("a", "r", "c")]), &named(&[("d", "r", "b")]))
                .unwrap();
        assert_eq!(store.known_answers(0, 0), &[1, 2]);
        // inverse of r is row 1; b's known heads are a and d
        assert_eq!(store.known_answers(1, 1), &[0, 3]);
        for split in Split::ALL {
            for (key, tails) in store.kvsall(split) {
                let known = store.known_answers(key.0, key.1);
                assert!(tails.iter().all(|t| known.contains(t)));
            }
        }
        assert_eq!(store.stats().test_entities_unseen_in_train, 1);
    }

    #[test]
    fn rejects_out_of_range_ids() {
        let mut vocab = Vocab::default();
        vocab.intern_entity("a");
        vocab.intern_relation("r");
        let err = TripleStore::new(vocab, vec![Triple::new(0, 0, 5)], vec![], vec![]).unwrap_err();
        assert!(matches!(err, Error::IdOutOfRange { id: 5, .. }));
    }

    #[test]
    fn load_reports_missing_and_malformed() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(load_dataset(dir.path()), Err(Error::MissingFile(_))));

        fs::write(dir.path().join("train.txt"), "a\tr\tb\n\n  c\tr\td  \nbroken line\n").unwrap();
        fs::write(dir.path().join("valid.txt"), "").unwrap();
        fs::write(dir.path().join("test.txt"), "").unwrap();
        match load_dataset(dir.path()) {
            Err(Error::MalformedLine { line, .. }) => assert_eq!(line, 4),
            other => panic!("expected malformed line, got {other:?}"),
        }

        fs::write(dir.path().join("train.txt"), "a\tr\tb\n\n  c\tr\td  \n").unwrap();
        let store = load_dataset(dir.path()).unwrap();
        assert_eq!(store.to_lines(Split::Train), vec!["a\tr\tb", "c\tr\td"]);
    }

    #[test]
    fn vocab_json_round_trip() {
        let store = TripleStore::from_named(&named(&[("a", "r", "b"), ("c", "s", "a")]), &[], &[]).unwrap();
        let json = serde_json::to_string(store.vocab()).unwrap();
        let back: Vocab = serde_json::from_str(&json).unwrap();
        assert_eq!(&back, store.vocab());
        assert_eq!(back.entity_id("c"), Some(2));
    }
}
