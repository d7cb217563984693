//! Edit-log ingestion: parsing, meta-page filtering, per-user sequence
//! assembly, aspect construction, chronological splitting, and a synthetic
//! dataset generator for desk-scale experiments.
//!
//! The edit log is UTF-8 line-delimited JSON with exactly the keys
//! `user_id, page_id, title, categories, timestamp, reverted`; labels are a
//! two-column TSV `user_id<TAB>label` with label `vandal` or `benign`.

use std::collections::HashMap;
use std::fmt;
use std::io::BufRead;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::embeddings::{embed_text, WordVectorStore};
use crate::error::{Error, Result};
use crate::numerics::{SeededRng, Vector};

/// One revision event.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EditRecord {
    pub user_id: String,
    pub page_id: u64,
    pub title: String,
    pub categories: Vec<String>,
    /// UTC seconds.
    pub timestamp: i64,
    pub reverted: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Label {
    Benign,
    Vandal,
}

impl Label {
    /// Class index used by the softmax classifier; vandal is the positive class.
    pub fn class_index(self) -> usize {
        match self {
            Label::Benign => 0,
            Label::Vandal => 1,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Label::Benign => "benign",
            Label::Vandal => "vandal",
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Label {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "benign" => Ok(Label::Benign),
            "vandal" => Ok(Label::Vandal),
            other => Err(Error::Config(format!(
                "label must be \"vandal\" or \"benign\", got {other:?}"
            ))),
        }
    }
}

/// A user's labeled edit history, sorted ascending by timestamp.
#[derive(Clone, Debug)]
pub struct UserSequence {
    pub user_id: String,
    pub label: Label,
    pub edits: Vec<EditRecord>,
}

impl UserSequence {
    pub fn len(&self) -> usize {
        self.edits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.edits.is_empty()
    }

    pub fn first_timestamp(&self) -> i64 {
        self.edits[0].timestamp
    }
}

/// Number of aspect streams: title, categories, revert status.
pub const ASPECT_COUNT: usize = 3;

/// Input dimension of the revert-status aspect (one-hot over two states).
pub const REVERT_DIM: usize = 2;

/// Per-user bundle of equal-length input-vector sequences, one per aspect.
#[derive(Clone, Debug)]
pub struct AspectSequences {
    pub user_id: String,
    pub label: Label,
    pub title: Vec<Vector>,
    pub category: Vec<Vector>,
    pub revert: Vec<Vector>,
}

impl AspectSequences {
    /// Sequence length T, identical across aspects.
    pub fn len(&self) -> usize {
        self.title.len()
    }

    pub fn is_empty(&self) -> bool {
        self.title.is_empty()
    }

    /// The aspect streams in model order.
    pub fn aspects(&self) -> [&[Vector]; ASPECT_COUNT] {
        [&self.title, &self.category, &self.revert]
    }

    /// Input dimension of each aspect stream.
    pub fn aspect_dims(&self) -> Vec<usize> {
        self.aspects().iter().map(|s| s[0].len()).collect()
    }
}

/// Parse a line-delimited JSON edit log; errors carry the 1-based line number.
pub fn parse_edit_log(source: impl BufRead) -> Result<Vec<EditRecord>> {
    let mut records = Vec::new();
    for (idx, line) in source.lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record: EditRecord = serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: line_no,
            msg: e.to_string(),
        })?;
        if record.title.is_empty() {
            return Err(Error::Parse { line: line_no, msg: "empty title".into() });
        }
        if record.timestamp < 0 {
            return Err(Error::Parse {
                line: line_no,
                msg: format!("negative timestamp {}", record.timestamp),
            });
        }
        records.push(record);
    }
    Ok(records)
}

/// Parse the two-column labels TSV; the last entry wins for repeated users.
pub fn read_labels(source: impl BufRead) -> Result<HashMap<String, Label>> {
    let mut labels = HashMap::new();
    for (idx, line) in source.lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let mut fields = line.split('\t');
        let (user, label) = match (fields.next(), fields.next(), fields.next()) {
            (Some(u), Some(l), None) => (u, l),
            _ => {
                return Err(Error::Parse {
                    line: line_no,
                    msg: "expected exactly two tab-separated fields".into(),
                })
            }
        };
        let label = label.parse::<Label>().map_err(|e| Error::Parse {
            line: line_no,
            msg: e.to_string(),
        })?;
        labels.insert(user.to_string(), label);
    }
    Ok(labels)
}

const META_PREFIXES: [&str; 4] = ["User:", "Talk:", "User talk:", "Wikipedia:"];

/// Drop edits on meta pages (titles containing any of the meta markers);
/// order is preserved.
pub fn filter_meta_edits(records: Vec<EditRecord>) -> Vec<EditRecord> {
    records
        .into_iter()
        .filter(|r| !META_PREFIXES.iter().any(|p| r.title.contains(p)))
        .collect()
}

/// Group records by user and sort each group by timestamp (stable, so file
/// order breaks ties). The output is ordered by user id; every user must
/// appear in `labels`.
pub fn group_into_user_sequences(
    records: Vec<EditRecord>,
    labels: &HashMap<String, Label>,
) -> Result<Vec<UserSequence>> {
    let mut by_user: HashMap<String, Vec<EditRecord>> = HashMap::new();
    for record in records {
        by_user.entry(record.user_id.clone()).or_default().push(record);
    }
    let mut users: Vec<UserSequence> = by_user
        .into_iter()
        .map(|(user_id, mut edits)| {
            let label = labels
                .get(&user_id)
                .copied()
                .ok_or_else(|| Error::MissingLabel(user_id.clone()))?;
            edits.sort_by_key(|e| e.timestamp);
            Ok(UserSequence { user_id, label, edits })
        })
        .collect::<Result<_>>()?;
    users.sort_by(|a, b| a.user_id.cmp(&b.user_id));
    Ok(users)
}

/// The three aspect input vectors for a single edit: averaged title
/// embedding, averaged category embedding (zero when no categories), and the
/// one-hot revert status `(1,0)` = kept, `(0,1)` = reverted.
pub fn edit_aspect_vectors(edit: &EditRecord, store: &WordVectorStore) -> [Vector; ASPECT_COUNT] {
    let title = embed_text(store, &edit.title);
    let category = if edit.categories.is_empty() {
        Vector::zeros(store.dim())
    } else {
        embed_text(store, &edit.categories.join(" "))
    };
    let revert = if edit.reverted {
        Vector::from_vec(vec![0.0, 1.0])
    } else {
        Vector::from_vec(vec![1.0, 0.0])
    };
    [title, category, revert]
}

/// Build the per-aspect input sequences for one user.
pub fn build_aspect_sequences(user: &UserSequence, store: &WordVectorStore) -> AspectSequences {
    let mut title = Vec::with_capacity(user.len());
    let mut category = Vec::with_capacity(user.len());
    let mut revert = Vec::with_capacity(user.len());
    for edit in &user.edits {
        let [t, c, r] = edit_aspect_vectors(edit, store);
        title.push(t);
        category.push(c);
        revert.push(r);
    }
    AspectSequences { user_id: user.user_id.clone(), label: user.label, title, category, revert }
}

/// Split users by first-edit time: a user trains iff their first edit is at
/// or before the cutoff (inclusive boundary).
pub fn chronological_split(
    users: Vec<UserSequence>,
    cutoff_timestamp: i64,
) -> (Vec<UserSequence>, Vec<UserSequence>) {
    users.into_iter().partition(|u| u.first_timestamp() <= cutoff_timestamp)
}

// Topic pools for synthetic titles. At separability 0 both classes draw only
// from the shared pool; at 1 they draw only from their own, disjoint pool.
const BENIGN_POOL: [&str; 16] = [
    "galaxy", "nebula", "quantum", "theorem", "algebra", "fossil", "glacier", "orchid", "sonata",
    "violin", "meadow", "comet", "lichen", "basalt", "tundra", "sonnet",
];
const VANDAL_POOL: [&str; 16] = [
    "prank", "chaos", "smash", "doodle", "graffiti", "blooper", "hoax", "gibberish", "troll",
    "scribble", "clown", "blunder", "garble", "mayhem", "goof", "snafu",
];
const SHARED_POOL: [&str; 16] = [
    "history", "culture", "science", "music", "river", "mountain", "city", "bridge", "island",
    "garden", "castle", "forest", "valley", "ocean", "desert", "temple",
];

/// All words the synthetic generator can emit.
pub fn synthetic_vocabulary() -> Vec<&'static str> {
    BENIGN_POOL.iter().chain(&VANDAL_POOL).chain(&SHARED_POOL).copied().collect()
}

/// Baseline revert probability shared by both classes.
const BASE_REVERT_RATE: f64 = 0.1;
/// Seconds between consecutive synthetic edits of one user.
const EDIT_SPACING: i64 = 60;
/// Synthetic user start times are spread uniformly over this many seconds.
const TIME_SPAN: u64 = 10_000_000;

/// Generate a balanced labeled dataset. Vandals draw `reverted = true` with
/// probability `0.1 + 0.8 * separability`, benign users with `0.1`; title
/// and category words come from class pools whose overlap shrinks as
/// separability grows. Deterministic in the seed.
pub fn gen_synthetic(
    n_users: usize,
    mean_edits: usize,
    separability: f64,
    seed: u64,
) -> Result<Vec<UserSequence>> {
    if n_users == 0 {
        return Err(Error::Config("n_users must be positive".into()));
    }
    if mean_edits == 0 {
        return Err(Error::Config("mean_edits must be at least 1".into()));
    }
    if !(0.0..=1.0).contains(&separability) {
        return Err(Error::Config(format!(
            "separability must be in [0, 1], got {separability}"
        )));
    }
    let mut rng = SeededRng::new(seed);
    let mut users = Vec::with_capacity(n_users);
    for i in 0..n_users {
        let label = if i % 2 == 0 { Label::Vandal } else { Label::Benign };
        let user_id = format!("u{i:05}");
        let revert_rate = match label {
            Label::Vandal => BASE_REVERT_RATE + 0.8 * separability,
            Label::Benign => BASE_REVERT_RATE,
        };
        let own_pool: &[&str] = match label {
            Label::Vandal => &VANDAL_POOL,
            Label::Benign => &BENIGN_POOL,
        };
        // Uniform on [1, 2*mean_edits - 1], so the mean is mean_edits.
        let edit_count = 1 + rng.below(2 * mean_edits - 1);
        let start = rng.below(TIME_SPAN as usize) as i64;
        let mut edits = Vec::with_capacity(edit_count);
        for step in 0..edit_count {
            let draw_word = |rng: &mut SeededRng| -> &'static str {
                let pool: &[&str] =
                    if rng.chance(separability) { own_pool } else { &SHARED_POOL };
                pool[rng.below(pool.len())]
            };
            let title_len = 2 + rng.below(3);
            let title: Vec<&str> = (0..title_len).map(|_| draw_word(&mut rng)).collect();
            let category_count = rng.below(3);
            let categories: Vec<String> =
                (0..category_count).map(|_| draw_word(&mut rng).to_string()).collect();
            edits.push(EditRecord {
                user_id: user_id.clone(),
                page_id: rng.below(100_000) as u64,
                title: title.join(" "),
                categories,
                timestamp: start + step as i64 * EDIT_SPACING,
                reverted: rng.chance(revert_rate),
            });
        }
        users.push(UserSequence { user_id, label, edits });
    }
    Ok(users)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::io::Cursor;

    fn record(user: &str, title: &str, ts: i64) -> EditRecord {
        EditRecord {
            user_id: user.into(),
            page_id: 1,
            title: title.into(),
            categories: vec![],
            timestamp: ts,
            reverted: false,
        }
    }

    #[test]
    fn parse_valid_line() {
        let line = r#"{"user_id":"u1","page_id":21210,"title":"Niels Bohr","categories":["physics"],"timestamp":100,"reverted":false}"#;
        let records = parse_edit_log(Cursor::new(line)).unwrap();
        assert_eq!(records.len(), 1);
        assert_eq!(records[0].title, "Niels Bohr");
        assert_eq!(records[0].categories, vec!["physics"]);
    }

    #[test]
    fn parse_missing_key_names_line() {
        let text = concat!(
            r#"{"user_id":"u1","page_id":1,"title":"A","categories":[],"timestamp":1,"reverted":false}"#,
            "\n",
            r#"{"user_id":"u1","page_id":1,"title":"B","categories":[],"reverted":false}"#,
        );
        match parse_edit_log(Cursor::new(text)).unwrap_err() {
            Error::Parse { line, msg } => {
                assert_eq!(line, 2);
                assert!(msg.contains("timestamp"), "{msg}");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn parse_rejects_empty_title_unknown_key_wrong_type() {
        let empty_title = r#"{"user_id":"u1","page_id":1,"title":"","categories":[],"timestamp":1,"reverted":false}"#;
        assert!(parse_edit_log(Cursor::new(empty_title)).is_err());
        let extra = r#"{"user_id":"u1","page_id":1,"title":"A","categories":[],"timestamp":1,"reverted":false,"extra":1}"#;
        assert!(parse_edit_log(Cursor::new(extra)).is_err());
        let bad_type = r#"{"user_id":"u1","page_id":1,"title":"A","categories":[],"timestamp":"x","reverted":false}"#;
        assert!(parse_edit_log(Cursor::new(bad_type)).is_err());
    }

    #[test]
    fn parse_empty_file() {
        assert!(parse_edit_log(Cursor::new("")).unwrap().is_empty());
    }

    #[test]
    fn filter_removes_meta_titles() {
        let records = vec![
            record("u1", "User talk:Foo", 1),
            record("u1", "Niels Bohr", 2),
            record("u1", "Talk:Physics", 3),
            record("u1", "Wikipedia:Sandbox", 4),
            record("u1", "User:Someone", 5),
        ];
        let kept = filter_meta_edits(records);
        assert_eq!(kept.len(), 1);
        assert_eq!(kept[0].title, "Niels Bohr");
    }

    #[test]
    fn filter_is_idempotent_and_total() {
        assert!(filter_meta_edits(vec![]).is_empty());
        let records = vec![record("u1", "A", 1), record("u1", "User:B", 2)];
        let once = filter_meta_edits(records);
        let twice = filter_meta_edits(once.clone());
        assert_eq!(once, twice);
    }

    fn label_map(entries: &[(&str, Label)]) -> HashMap<String, Label> {
        entries.iter().map(|(u, l)| (u.to_string(), *l)).collect()
    }

    #[test]
    fn group_sorts_by_timestamp() {
        let records = vec![record("u1", "C", 30), record("u1", "A", 10), record("u1", "B", 20)];
        let users =
            group_into_user_sequences(records, &label_map(&[("u1", Label::Benign)])).unwrap();
        assert_eq!(users.len(), 1);
        assert_eq!(users[0].len(), 3);
        let times: Vec<i64> = users[0].edits.iter().map(|e| e.timestamp).collect();
        assert_eq!(times, vec![10, 20, 30]);
    }

    #[test]
    fn group_interleaved_users_matches_direct_grouping() {
        let records = vec![
            record("u2", "A", 5),
            record("u1", "B", 9),
            record("u2", "C", 1),
            record("u1", "D", 2),
        ];
        let labels = label_map(&[("u1", Label::Vandal), ("u2", Label::Benign)]);
        let users = group_into_user_sequences(records, &labels).unwrap();
        // Independent oracle: partition by hand.
        assert_eq!(users.len(), 2);
        assert_eq!(users[0].user_id, "u1");
        assert_eq!(
            users[0].edits.iter().map(|e| e.timestamp).collect::<Vec<_>>(),
            vec![2, 9]
        );
        assert_eq!(users[1].user_id, "u2");
        assert_eq!(
            users[1].edits.iter().map(|e| e.timestamp).collect::<Vec<_>>(),
            vec![1, 5]
        );
    }

    #[test]
    fn fully_filtered_users_vanish_from_grouping() {
        let records = vec![
            record("meta_only", "User talk:Spam", 1),
            record("meta_only", "Wikipedia:Sandbox", 2),
            record("real", "Niels Bohr", 3),
        ];
        let labels = label_map(&[("meta_only", Label::Vandal), ("real", Label::Benign)]);
        let users = group_into_user_sequences(filter_meta_edits(records), &labels).unwrap();
        assert_eq!(users.len(), 1);
        assert_eq!(users[0].user_id, "real");
    }

    #[test]
    fn group_requires_labels() {
        let records = vec![record("u1", "A", 1)];
        match group_into_user_sequences(records, &HashMap::new()).unwrap_err() {
            Error::MissingLabel(user) => assert_eq!(user, "u1"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn labels_tsv_round_trip_and_validation() {
        let labels = read_labels(Cursor::new("u1\tvandal\nu2\tbenign\n")).unwrap();
        assert_eq!(labels["u1"], Label::Vandal);
        assert_eq!(labels["u2"], Label::Benign);
        assert!(read_labels(Cursor::new("u1\tweird")).is_err());
        assert!(read_labels(Cursor::new("u1 vandal")).is_err());
    }

    fn tiny_store() -> WordVectorStore {
        let text = "galaxy 1.0 0.0\nchaos 0.0 1.0\n";
        crate::embeddings::load_word_vectors(Cursor::new(text), 2, 0).unwrap()
    }

    #[test]
    fn aspects_have_equal_length_and_stated_encoding() {
        let mut edits = vec![record("u1", "galaxy chaos", 1), record("u1", "galaxy", 2)];
        edits[1].reverted = true;
        edits[1].categories = vec!["chaos".into()];
        let user = UserSequence { user_id: "u1".into(), label: Label::Vandal, edits };
        let store = tiny_store();
        let aspects = build_aspect_sequences(&user, &store);
        assert_eq!(aspects.len(), 2);
        assert_eq!(aspects.aspect_dims(), vec![2, 2, REVERT_DIM]);
        // Title averaging.
        assert_eq!(aspects.title[0].as_slice(), &[0.5, 0.5]);
        // No categories -> zero vector; one category -> its embedding.
        assert_eq!(aspects.category[0].as_slice(), &[0.0, 0.0]);
        assert_eq!(aspects.category[1].as_slice(), &[0.0, 1.0]);
        // One-hot revert encoding.
        assert_eq!(aspects.revert[0].as_slice(), &[1.0, 0.0]);
        assert_eq!(aspects.revert[1].as_slice(), &[0.0, 1.0]);
        for aspect in aspects.aspects() {
            assert!(aspect.iter().all(|v| v.all_finite()));
        }
    }

    #[test]
    fn split_uses_inclusive_first_edit_boundary() {
        let mk = |id: &str, first: i64| UserSequence {
            user_id: id.into(),
            label: Label::Benign,
            edits: vec![record(id, "A", first), record(id, "B", first + 100)],
        };
        let users = vec![mk("early", 10), mk("exact", 50), mk("late", 51)];
        let (train, test) = chronological_split(users, 50);
        let train_ids: Vec<&str> = train.iter().map(|u| u.user_id.as_str()).collect();
        let test_ids: Vec<&str> = test.iter().map(|u| u.user_id.as_str()).collect();
        assert_eq!(train_ids, vec!["early", "exact"]);
        assert_eq!(test_ids, vec!["late"]);
    }

    #[test]
    fn split_can_empty_the_train_side() {
        let users = gen_synthetic(10, 3, 0.5, 1).unwrap();
        let (train, test) = chronological_split(users, -1);
        assert!(train.is_empty());
        assert_eq!(test.len(), 10);
    }

    #[test]
    fn synthetic_is_deterministic_and_balanced() {
        let a = gen_synthetic(100, 5, 0.7, 3).unwrap();
        let b = gen_synthetic(100, 5, 0.7, 3).unwrap();
        assert_eq!(a.len(), 100);
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.user_id, y.user_id);
            assert_eq!(x.label, y.label);
            assert_eq!(x.edits, y.edits);
        }
        let vandals = a.iter().filter(|u| u.label == Label::Vandal).count();
        assert_eq!(vandals, 50);
    }

    #[test]
    fn synthetic_revert_rates_match_stated_probabilities() {
        // Empirical frequency oracle at full separability: 0.9 vs 0.1.
        let users = gen_synthetic(2000, 8, 1.0, 11).unwrap();
        let rate = |label: Label| {
            let (reverted, total) = users
                .iter()
                .filter(|u| u.label == label)
                .flat_map(|u| &u.edits)
                .fold((0usize, 0usize), |(r, t), e| (r + e.reverted as usize, t + 1));
            reverted as f64 / total as f64
        };
        assert!((rate(Label::Vandal) - 0.9).abs() < 0.02, "{}", rate(Label::Vandal));
        assert!((rate(Label::Benign) - 0.1).abs() < 0.02, "{}", rate(Label::Benign));
    }

    #[test]
    fn synthetic_rejects_bad_arguments() {
        assert!(gen_synthetic(0, 5, 0.5, 1).is_err());
        assert!(gen_synthetic(10, 0, 0.5, 1).is_err());
        assert!(gen_synthetic(10, 5, 1.5, 1).is_err());
    }

    #[test]
    fn synthetic_mean_length_is_roughly_mean_edits() {
        let users = gen_synthetic(4000, 8, 0.5, 5).unwrap();
        let mean = users.iter().map(UserSequence::len).sum::<usize>() as f64 / 4000.0;
        assert!((mean - 8.0).abs() < 0.5, "mean length {mean}");
    }

    proptest! {
        #[test]
        fn split_partitions_users(cutoff in 0i64..10_000_000, seed in 0u64..50) {
            let users = gen_synthetic(30, 4, 0.5, seed).unwrap();
            let all: Vec<String> = users.iter().map(|u| u.user_id.clone()).collect();
            let (train, test) = chronological_split(users, cutoff);
            let mut combined: Vec<String> = train
                .iter()
                .chain(&test)
                .map(|u| u.user_id.clone())
                .collect();
            combined.sort();
            prop_assert_eq!(combined, all);
            for u in &train {
                prop_assert!(u.first_timestamp() <= cutoff);
            }
            for u in &test {
                prop_assert!(u.first_timestamp() > cutoff);
            }
        }
    }
}
