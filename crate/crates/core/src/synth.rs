//! Seeded synthetic corpora built from four dialog patterns: a single fatal
//! turn, a rephrase loop, a refinement chain and clean dialogs. Labels follow
//! the pattern (the first two are defects) and turn scores follow each
//! pattern's typical TLD signature.

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::LabeledDialog;
use crate::dialog::{dialog_id_for, Dialog, RawUtteranceEvent};
use crate::error::{Error, Result};
use crate::tld::TldScoreMap;

pub const MIN_TURNS: usize = 2;
pub const MAX_TURNS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pattern {
    FatalTurn,
    RephraseLoop,
    RefinementChain,
    Clean,
}

impl Pattern {
    pub const ALL: [Pattern; 4] = [
        Pattern::FatalTurn,
        Pattern::RephraseLoop,
        Pattern::RefinementChain,
        Pattern::Clean,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Pattern::FatalTurn => "fatal_turn",
            Pattern::RephraseLoop => "rephrase_loop",
            Pattern::RefinementChain => "refinement_chain",
            Pattern::Clean => "clean",
        }
    }

    pub fn is_defect(self) -> bool {
        matches!(self, Pattern::FatalTurn | Pattern::RephraseLoop)
    }
}

impl fmt::Display for Pattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Pattern {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Pattern::ALL
            .into_iter()
            .find(|p| p.as_str() == s)
            .ok_or_else(|| Error::InvalidParameter(format!("unknown pattern {s:?}")))
    }
}

/// Fraction of dialogs per pattern; must sum to 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PatternMix {
    pub fatal_turn: f64,
    pub rephrase_loop: f64,
    pub refinement_chain: f64,
    pub clean: f64,
}

impl PatternMix {
    pub fn uniform() -> Self {
        Self {
            fatal_turn: 0.25,
            rephrase_loop: 0.25,
            refinement_chain: 0.25,
            clean: 0.25,
        }
    }

    pub fn only(p: Pattern) -> Self {
        let mut mix = Self {
            fatal_turn: 0.0,
            rephrase_loop: 0.0,
            refinement_chain: 0.0,
            clean: 0.0,
        };
        *mix.get_mut(p) = 1.0;
        mix
    }

    pub fn get(&self, p: Pattern) -> f64 {
        match p {
            Pattern::FatalTurn => self.fatal_turn,
            Pattern::RephraseLoop => self.rephrase_loop,
            Pattern::RefinementChain => self.refinement_chain,
            Pattern::Clean => self.clean,
        }
    }

    fn get_mut(&mut self, p: Pattern) -> &mut f64 {
        match p {
            Pattern::FatalTurn => &mut self.fatal_turn,
            Pattern::RephraseLoop => &mut self.rephrase_loop,
            Pattern::RefinementChain => &mut self.refinement_chain,
            Pattern::Clean => &mut self.clean,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let parts = Pattern::ALL.map(|p| self.get(p));
        if parts.iter().any(|f| !f.is_finite() || *f < 0.0) {
            return Err(Error::InvalidParameter(format!("mix fractions must be >= 0: {parts:?}")));
        }
        let total: f64 = parts.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidParameter(format!("mix fractions sum to {total}, not 1")));
        }
        Ok(())
    }

    /// Exact per-pattern counts for `n` dialogs (largest remainder).
    pub fn counts(&self, n: usize) -> [usize; 4] {
        let exact = Pattern::ALL.map(|p| self.get(p) * n as f64);
        let mut counts = exact.map(|x| x.floor() as usize);
        let mut order: Vec<usize> = (0..4).collect();
        order.sort_by(|&a, &b| {
            let ra = exact[a] - exact[a].floor();
            let rb = exact[b] - exact[b].floor();
            rb.total_cmp(&ra).then(a.cmp(&b))
        });
        let missing = n - counts.iter().sum::<usize>();
        for &i in order.iter().take(missing) {
            counts[i] += 1;
        }
        counts
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub n_dialogs: usize,
    pub mix: PatternMix,
    pub seed: u64,
}

impl SynthSpec {
    pub fn new(n_dialogs: usize, mix: PatternMix, seed: u64) -> Self {
        Self { n_dialogs, mix, seed }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthCorpus {
    pub dialogs: Vec<LabeledDialog>,
    pub scores: TldScoreMap<f64>,
}

struct UseCase {
    name: &'static str,
    requests: &'static [&'static str],
    answers: &'static [&'static str],
    modifiers: &'static [&'static str],
}

const USE_CASES: [UseCase; 4] = [
    UseCase {
        name: "shopping",
        requests: &[
            "add paper towels to my cart",
            "order more coffee beans",
            "buy a phone charger",
            "reorder dish soap",
            "add batteries to my shopping list",
        ],
        answers: &[
            "okay, i added that to your cart",
            "your order has been placed",
            "i found a few options, the top one is in your cart",
            "done, it is on your shopping list",
        ],
        modifiers: &["the cheaper one", "the large pack", "two of them", "the organic kind", "the blue one"],
    },
    UseCase {
        name: "delivery",
        requests: &[
            "where is my package",
            "track my order",
            "when does my delivery arrive",
            "has my parcel shipped",
            "what is the status of my return",
        ],
        answers: &[
            "your package arrives tomorrow by noon",
            "your order shipped this morning",
            "the parcel is out for delivery",
            "your return was received",
        ],
        modifiers: &["the one from last week", "the book order", "the big box", "my other order", "the express one"],
    },
    UseCase {
        name: "weather",
        requests: &[
            "what is the weather today",
            "will it rain tomorrow",
            "how cold is it outside",
            "what is the forecast for the weekend",
            "do i need an umbrella",
        ],
        answers: &[
            "it is sunny with a high of seventy",
            "expect light rain in the afternoon",
            "it is currently fifty degrees",
            "the weekend looks clear and mild",
        ],
        modifiers: &["in boston", "for saturday morning", "in celsius", "near the airport", "for next week"],
    },
    UseCase {
        name: "music",
        requests: &[
            "play some jazz",
            "play my workout playlist",
            "put on relaxing music",
            "play the latest album by my favorite band",
            "shuffle my liked songs",
        ],
        answers: &[
            "playing jazz favorites",
            "here is your workout playlist",
            "now playing a relaxing mix",
            "shuffling your liked songs",
        ],
        modifiers: &["a bit louder", "something more upbeat", "on the kitchen speaker", "without lyrics", "from the nineties"],
    },
];

const FAILURES: [&str; 3] = [
    "sorry, i don't have an answer for that",
    "i am having trouble understanding right now",
    "something went wrong, please try again later",
];

const REPHRASE_PREFIXES: [&str; 5] = ["no, ", "i said ", "i meant ", "again, ", "please just "];
const CLOSINGS: [&str; 3] = ["forget it", "never mind", "stop"];
const FRUSTRATION: [&str; 4] = [
    "that is not helpful",
    "ugh, this is useless",
    "you never get this right",
    "this is so frustrating",
];
const THANKS: [&str; 4] = ["thanks", "perfect, thank you", "great", "that is what i wanted"];
const ACKNOWLEDGEMENTS: [&str; 3] = ["okay", "alright", "you are welcome"];
const REFINE_PREFIXES: [&str; 4] = ["make it ", "actually ", "can you change it to ", "and "];

struct Draft {
    user: String,
    system: String,
    score: f64,
}

fn low(rng: &mut ChaCha8Rng) -> f64 {
    rng.gen_range(0.01..0.25)
}

fn pick<'a>(rng: &mut ChaCha8Rng, items: &[&'a str]) -> &'a str {
    items[rng.gen_range(0..items.len())]
}

/// A fluent reply taken from another use case: fine on the surface, wrong here.
fn off_topic(rng: &mut ChaCha8Rng, uc: usize) -> String {
    let other = (uc + rng.gen_range(1..USE_CASES.len())) % USE_CASES.len();
    pick(rng, USE_CASES[other].answers).to_string()
}

/// Successful turns, a quarter of them a thank-you. 30% of clean dialogs
/// carry one false-alarm turn score, 30% end one exchange with words like
/// "stop", and a quarter contain one failed turn that the user immediately
/// repairs by asking again.
fn clean(rng: &mut ChaCha8Rng, uc: usize, len: usize) -> Vec<Draft> {
    let case = &USE_CASES[uc];
    let mut turns: Vec<Draft> = (0..len)
        .map(|_| {
            if rng.gen_bool(0.25) {
                closing_turn(rng, &THANKS)
            } else {
                success_turn(rng, uc)
            }
        })
        .collect();
    if rng.gen_bool(0.3) {
        let at = rng.gen_range(0..len);
        turns[at] = closing_turn(rng, &CLOSINGS);
    }
    if rng.gen_bool(0.3) {
        let at = rng.gen_range(0..len);
        turns[at].score = rng.gen_range(0.55..0.95);
    }
    if rng.gen_bool(0.25) {
        let at = rng.gen_range(0..len - 1);
        let request = pick(rng, case.requests);
        turns[at] = Draft {
            user: request.to_string(),
            system: failed_reply(rng, uc, 0.5),
            score: rng.gen_range(0.55..0.95),
        };
        let user = if rng.gen_bool(0.5) {
            format!("{}{request}", pick(rng, &REPHRASE_PREFIXES))
        } else {
            request.to_string()
        };
        turns[at + 1] = Draft {
            user,
            system: pick(rng, case.answers).to_string(),
            score: low(rng),
        };
    }
    turns
}

/// A successful turn with no false alarm.
fn success_turn(rng: &mut ChaCha8Rng, uc: usize) -> Draft {
    let case = &USE_CASES[uc];
    Draft {
        user: pick(rng, case.requests).to_string(),
        system: pick(rng, case.answers).to_string(),
        score: low(rng),
    }
}

/// Turns after an unresolved failure: the user now and then gives up on an
/// exchange or voices frustration, otherwise moves on to other requests.
fn aftermath(rng: &mut ChaCha8Rng, uc: usize, n: usize) -> Vec<Draft> {
    (0..n)
        .map(|_| {
            if rng.gen_bool(0.35) {
                let words = if rng.gen_bool(0.6) { &FRUSTRATION[..] } else { &CLOSINGS[..] };
                closing_turn(rng, words)
            } else {
                success_turn(rng, uc)
            }
        })
        .collect()
}

fn closing_turn(rng: &mut ChaCha8Rng, words: &[&str]) -> Draft {
    Draft {
        user: pick(rng, words).to_string(),
        system: pick(rng, &ACKNOWLEDGEMENTS).to_string(),
        score: low(rng),
    }
}

fn failed_reply(rng: &mut ChaCha8Rng, uc: usize, explicit: f64) -> String {
    if rng.gen_bool(explicit) {
        pick(rng, &FAILURES).to_string()
    } else {
        off_topic(rng, uc)
    }
}

fn fatal(rng: &mut ChaCha8Rng, uc: usize, len: usize) -> Vec<Draft> {
    let case = &USE_CASES[uc];
    let at = rng.gen_range(0..len - 1);
    let mut turns: Vec<Draft> = (0..at).map(|_| success_turn(rng, uc)).collect();
    turns.push(Draft {
        user: pick(rng, case.requests).to_string(),
        system: failed_reply(rng, uc, 0.5),
        score: rng.gen_range(0.72..0.95),
    });
    turns.extend(aftermath(rng, uc, len - at - 1));
    turns
}

/// A request repeated over failed turns. Loops the user abandons end the
/// dialog; recovered loops may sit anywhere.
fn rephrase(rng: &mut ChaCha8Rng, uc: usize, len: usize) -> Vec<Draft> {
    let case = &USE_CASES[uc];
    let loop_len = rng.gen_range(2..=(len.div_ceil(2)).max(2));
    let recovers = rng.gen_bool(0.5);
    let start = if recovers { rng.gen_range(0..=len - loop_len) } else { len - loop_len };
    let request = pick(rng, case.requests);
    let mut turns: Vec<Draft> = (0..start).map(|_| success_turn(rng, uc)).collect();
    for k in 0..loop_len {
        let user = if k > 0 && rng.gen_bool(0.5) {
            format!("{}{request}", pick(rng, &REPHRASE_PREFIXES))
        } else {
            request.to_string()
        };
        if k + 1 == loop_len && recovers {
            turns.push(Draft {
                user,
                system: pick(rng, case.answers).to_string(),
                score: low(rng),
            });
            continue;
        }
        let system = failed_reply(rng, uc, 0.5);
        let score = if rng.gen_bool(0.65) {
            rng.gen_range(0.6..0.99)
        } else {
            rng.gen_range(0.15..0.45)
        };
        turns.push(Draft { user, system, score });
    }
    let rest = len - turns.len();
    turns.extend((0..rest).map(|_| success_turn(rng, uc)));
    turns
}

fn refinement(rng: &mut ChaCha8Rng, uc: usize, len: usize) -> Vec<Draft> {
    let case = &USE_CASES[uc];
    let request = pick(rng, case.requests);
    (0..len)
        .map(|i| {
            let user = if i == 0 {
                request.to_string()
            } else {
                let prefix = if rng.gen_bool(0.25) {
                    pick(rng, &REPHRASE_PREFIXES)
                } else {
                    pick(rng, &REFINE_PREFIXES)
                };
                format!("{prefix}{}", pick(rng, case.modifiers))
            };
            let system = pick(rng, case.answers).to_string();
            let score = if i + 1 < len && rng.gen_bool(0.5) {
                rng.gen_range(0.5..0.95)
            } else {
                low(rng)
            };
            Draft { user, system, score }
        })
        .collect()
}

fn rating(rng: &mut ChaCha8Rng, defect: bool) -> u8 {
    if defect {
        rng.gen_range(1..=3)
    } else {
        rng.gen_range(4..=5)
    }
}

fn round4(x: f64) -> f64 {
    (x * 1e4).round() / 1e4
}

/// Builds the corpus. Identifiers embed the seed, so corpora generated
/// under different seeds never share user, dialog or turn ids.
pub fn generate(spec: &SynthSpec) -> Result<SynthCorpus> {
    spec.mix.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut patterns: Vec<Pattern> = Pattern::ALL
        .iter()
        .zip(spec.mix.counts(spec.n_dialogs))
        .flat_map(|(&p, n)| std::iter::repeat_n(p, n))
        .collect();
    patterns.shuffle(&mut rng);

    let mut dialogs = Vec::with_capacity(patterns.len());
    let mut scores = TldScoreMap::new();
    for (i, &pattern) in patterns.iter().enumerate() {
        let uc = rng.gen_range(0..USE_CASES.len());
        let len = rng.gen_range(MIN_TURNS..=MAX_TURNS);
        let drafts = match pattern {
            Pattern::FatalTurn => fatal(&mut rng, uc, len),
            Pattern::RephraseLoop => rephrase(&mut rng, uc, len),
            Pattern::RefinementChain => refinement(&mut rng, uc, len),
            Pattern::Clean => clean(&mut rng, uc, len),
        };
        let user_id = format!("s{}-u{i}", spec.seed);
        let mut ts = 1_700_000_000 + i as i64 * 3_600;
        let dialog_id = dialog_id_for(&user_id, ts);
        let mut events = Vec::with_capacity(drafts.len());
        for (k, d) in drafts.into_iter().enumerate() {
            let turn_id = format!("s{}-d{i}-t{k}", spec.seed);
            scores.insert(turn_id.clone(), round4(d.score))?;
            events.push(RawUtteranceEvent {
                user_id: user_id.clone(),
                timestamp: ts,
                user_text: d.user,
                system_text: d.system,
                turn_id,
                use_case: USE_CASES[uc].name.to_string(),
                dialog_id: None,
            });
            ts += rng.gen_range(5..=90);
        }
        let defect = pattern.is_defect();
        dialogs.push(LabeledDialog {
            dialog: Dialog::from_events(dialog_id, events)?,
            rating: Some(rating(&mut rng, defect)),
            defect,
            pattern: Some(pattern.as_str().to_string()),
        });
    }
    Ok(SynthCorpus { dialogs, scores })
}
