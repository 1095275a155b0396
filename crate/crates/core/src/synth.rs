//! Seeded synthetic corpora for tests, demos and sanity experiments.

use std::collections::{HashMap, HashSet};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::{Corpus, Record, SpoilerTag};

const FILLER: &[&str] = &[
    "about", "after", "again", "along", "also", "another", "around", "away", "back", "because", "been", "before",
    "being", "both", "came", "come", "could", "day", "did", "does", "done", "down", "each", "even", "every", "few",
    "from", "gave", "get", "going", "good", "had", "has", "have", "her", "here", "him", "his", "into", "its", "just",
    "know", "last", "like", "long", "made", "make", "many", "more", "most", "much", "must", "new", "next", "now",
    "off", "old", "once", "only", "other", "our", "out", "over", "own", "part", "people", "place", "put", "said",
    "same", "saw", "say", "see", "she", "should", "since", "some", "still", "such", "take", "than", "that", "their",
    "them", "then", "there", "these", "they", "thing", "those", "though", "time", "told", "too", "took", "under",
    "upon", "very", "was", "way", "well", "went", "were", "what", "when", "where", "which", "while", "who", "why",
    "with", "work", "would", "year", "yet", "you", "your",
];

/// Title words that never occur in generated articles.
const TITLE_DECOR: &[&str] = &["shocking", "incredible", "amazing", "unbelievable", "guess", "finally", "revealed"];

/// Content words paired with a synonym, for planted keys and paraphrasing.
const SYNONYMS: &[(&str, &str)] = &[
    ("island", "isle"), ("cheapest", "lowest"), ("holiday", "vacation"), ("feature", "function"),
    ("removed", "deleted"), ("lessons", "teachings"), ("cuisine", "cooking"), ("secret", "hidden"),
    ("doctor", "physician"), ("village", "hamlet"), ("garden", "yard"), ("river", "stream"),
    ("mountain", "peak"), ("winter", "frost"), ("summer", "heat"), ("ocean", "sea"),
    ("famous", "renowned"), ("huge", "enormous"), ("tiny", "minute"), ("quick", "rapid"),
    ("ancient", "antique"), ("modern", "current"), ("wealthy", "rich"), ("happy", "cheerful"),
    ("angry", "furious"), ("clever", "smart"), ("danger", "peril"), ("journey", "voyage"),
    ("reward", "prize"), ("purchase", "buy"), ("begin", "start"), ("finish", "complete"),
    ("answer", "reply"), ("error", "mistake"), ("silent", "quiet"), ("brave", "bold"),
    ("market", "bazaar"), ("picture", "photo"), ("vehicle", "car"), ("child", "kid"),
    ("shout", "yell"), ("choose", "pick"), ("gift", "present"), ("sick", "ill"),
    ("beautiful", "lovely"), ("difficult", "hard"), ("simple", "easy"), ("permit", "allow"),
    ("repair", "fix"), ("assist", "help"), ("enormous", "giant"), ("fragile", "delicate"),
    ("cottage", "cabin"), ("harbor", "port"), ("forest", "woods"), ("meadow", "field"),
    ("castle", "fortress"), ("lantern", "lamp"), ("pillow", "cushion"), ("thunder", "boom"),
    ("velvet", "satin"), ("copper", "bronze"), ("saffron", "spice"), ("glacier", "icefield"),
];

/// Deterministic "paraphrase": every word with a known synonym is replaced.
pub fn paraphrase(text: &str) -> String {
    let table: HashMap<&str, &str> = SYNONYMS.iter().copied().collect();
    text.split(' ')
        .map(|w| {
            let lower = w.to_lowercase();
            table.get(lower.as_str()).map(|s| s.to_string()).unwrap_or_else(|| w.to_string())
        })
        .collect::<Vec<_>>()
        .join(" ")
}

/// Article words plus the separator that follows each one.
struct Article {
    words: Vec<String>,
    paragraph_len: usize,
}

impl Article {
    fn separator_after(&self, i: usize) -> &'static str {
        if (i + 1).is_multiple_of(self.paragraph_len) {
            "\n"
        } else {
            " "
        }
    }

    fn paragraphs(&self) -> Vec<String> {
        self.words.chunks(self.paragraph_len).map(|c| c.join(" ")).collect()
    }

    fn slice(&self, start: usize, end: usize) -> String {
        let mut s = String::new();
        for i in start..end {
            s.push_str(&self.words[i]);
            if i + 1 < end {
                s.push_str(self.separator_after(i));
            }
        }
        s
    }
}

fn filler(rng: &mut ChaCha8Rng, lens: std::ops::RangeInclusive<usize>) -> Vec<String> {
    let n = rng.gen_range(lens);
    (0..n).map(|_| FILLER.choose(rng).unwrap().to_string()).collect()
}

/// A record with known gold spans, in article-token coordinates.
#[derive(Debug, Clone)]
pub struct PlantedRecord {
    pub record: Record,
    /// `[start, end)` token ranges, in article order.
    pub spans: Vec<(usize, usize)>,
}

/// Records whose title keywords occur once each in the article, packed into
/// planted spans: one span of 1..=5 tokens (phrase), one of 6..=25 tokens
/// starting and ending on a keyword (passage), or 2..=4 short keyword spans
/// (multi). For phrase and passage the planted span is the unique shortest
/// highest-scoring span of its length class. Tags cycle phrase, passage, multi.
pub fn planted_corpus(count: usize, seed: u64) -> Vec<PlantedRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|i| {
            let tag = SpoilerTag::ALL[i % 3];
            planted_record(&mut rng, i, tag)
        })
        .collect()
}

fn planted_record(rng: &mut ChaCha8Rng, index: usize, tag: SpoilerTag) -> PlantedRecord {
    let mut keys: Vec<&str> = SYNONYMS.iter().map(|p| p.0).collect();
    keys.shuffle(rng);
    let mut keys = keys.into_iter();

    // Each planted span as a word list; keyword positions marked.
    let mut planted: Vec<Vec<String>> = Vec::new();
    let mut title_keys: Vec<String> = Vec::new();
    match tag {
        SpoilerTag::Phrase => {
            let len = rng.gen_range(1..=5);
            let span: Vec<String> = keys.by_ref().take(len).map(str::to_string).collect();
            title_keys.extend(span.iter().cloned());
            planted.push(span);
        }
        SpoilerTag::Passage => {
            let len = rng.gen_range(6..=25);
            let mut span = filler(rng, len..=len);
            let mut slots = vec![0, len - 1];
            for _ in 0..rng.gen_range(0..=3) {
                slots.push(rng.gen_range(1..len - 1));
            }
            slots.sort_unstable();
            slots.dedup();
            for s in slots {
                let k = keys.next().unwrap().to_string();
                span[s] = k.clone();
                title_keys.push(k);
            }
            planted.push(span);
        }
        SpoilerTag::Multi => {
            for _ in 0..rng.gen_range(2..=4) {
                let len = rng.gen_range(1..=4);
                let span: Vec<String> = keys.by_ref().take(len).map(str::to_string).collect();
                title_keys.extend(span.iter().cloned());
                planted.push(span);
            }
        }
    }

    let mut words = filler(rng, 8..=40);
    let mut spans = Vec::new();
    for (j, span) in planted.iter().enumerate() {
        if j > 0 {
            let gap = rng.gen_range(1..=30);
            words.extend(filler(rng, gap..=gap));
        }
        spans.push((words.len(), words.len() + span.len()));
        words.extend(span.iter().cloned());
    }
    words.extend(filler(rng, 8..=40));
    let article = Article {
        words,
        paragraph_len: rng.gen_range(10..=30),
    };

    let mut title_words = title_keys.clone();
    title_words.push(TITLE_DECOR.choose(rng).unwrap().to_string());
    title_words.push("is".into());
    title_words.shuffle(rng);
    let mut title = title_words.join(" ");
    if let Some(c) = title.get(..1) {
        title = c.to_uppercase() + &title[1..];
    }

    let spoilers = spans.iter().map(|&(s, e)| article.slice(s, e)).collect();
    PlantedRecord {
        record: Record {
            id: format!("planted-{index}"),
            title: format!("{title}?"),
            paragraphs: article.paragraphs(),
            spoilers,
            tag: Some(tag),
        },
        spans,
    }
}

/// Gold spoilers are verbatim article spans; see [`planted_corpus`].
pub fn verbatim_corpus(count: usize, seed: u64) -> Corpus {
    Corpus::new("synthetic-verbatim", planted_corpus(count, seed).into_iter().map(|p| p.record).collect())
}

// No character 3-5-gram is shared between any two of these lists or with TOPICS.
const MULTI_CUES: &[&str] = &[
    "reasons", "ways", "tips", "signs", "steps", "ideas", "hacks", "perks", "myths", "quirks", "lessons",
];
const PASSAGE_CUES: &[&str] = &["because", "behind", "science", "secretly", "why", "origin", "hidden", "purpose"];
const PHRASE_CUES: &[&str] = &[
    "name", "winner", "city", "actor", "number", "mascot", "champ", "olympian", "zip", "anthem",
];
const TOPICS: &[&str] = &["coffee", "dogs", "travel", "money", "sleep", "phones", "pizza", "football", "cats", "music"];

/// Labeled records whose title vocabulary differs by spoiler type, so both
/// cascade tasks are linearly separable on title n-grams. Half the records
/// are multi; the rest split evenly between passage and phrase. Gold spoilers
/// are verbatim article text of the right shape.
pub fn separable_corpus(count: usize, seed: u64) -> Corpus {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let records = (0..count)
        .map(|i| {
            let tag = match i % 4 {
                0 | 2 => SpoilerTag::Multi,
                1 => SpoilerTag::Passage,
                _ => SpoilerTag::Phrase,
            };
            separable_record(&mut rng, i, tag)
        })
        .collect();
    Corpus::new("synthetic-separable", records)
}

fn separable_record(rng: &mut ChaCha8Rng, index: usize, tag: SpoilerTag) -> Record {
    let cues = match tag {
        SpoilerTag::Multi => MULTI_CUES,
        SpoilerTag::Passage => PASSAGE_CUES,
        SpoilerTag::Phrase => PHRASE_CUES,
    };
    let mut title: Vec<&str> = cues.choose_multiple(rng, 3).copied().collect();
    title.push(TOPICS.choose(rng).unwrap());
    title.shuffle(rng);
    let title = title.join(" ");

    let spoiler_lens: Vec<usize> = match tag {
        SpoilerTag::Phrase => vec![rng.gen_range(1..=4)],
        SpoilerTag::Passage => vec![rng.gen_range(8..=16)],
        SpoilerTag::Multi => (0..rng.gen_range(2..=4)).map(|_| rng.gen_range(1..=3)).collect(),
    };
    let mut words = filler(rng, 20..=40);
    let mut spoilers = Vec::new();
    for len in spoiler_lens {
        let span = filler(rng, len..=len);
        spoilers.push(span.join(" "));
        words.extend(span);
        words.extend(filler(rng, 5..=15));
    }
    Record {
        id: index.to_string(),
        title,
        paragraphs: vec![words.join(" ")],
        spoilers,
        tag: Some(tag),
    }
}

/// Every title keyword in a planted record, lowercased.
pub fn planted_keywords(p: &PlantedRecord) -> HashSet<String> {
    let table: HashSet<&str> = SYNONYMS.iter().map(|s| s.0).collect();
    p.record
        .title
        .split(|c: char| !c.is_alphanumeric())
        .map(str::to_lowercase)
        .filter(|w| table.contains(w.as_str()))
        .collect()
}
