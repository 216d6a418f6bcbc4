use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::spec::GameSpec;
use super::{ActionCandidate, Environment, Observation, StepResult};
use crate::error::{Error, Result};
use crate::text::{Seq, Vocabulary};

/// Ordinary commands. None of their words appear in [`NOVEL_COMMANDS`].
pub(crate) const COMMON_COMMANDS: &[&str] = &[
    "go north",
    "go south",
    "go east",
    "go west",
    "go up",
    "go down",
    "open door",
    "close door",
    "open chest",
    "take lamp",
    "drop lamp",
    "take rope",
    "drop rope",
    "read sign",
    "push button",
    "pull lever",
    "climb ladder",
    "light torch",
    "search",
    "look",
    "listen",
    "wait",
    "jump",
    "knock on door",
    "turn on lamp",
    "turn off lamp",
    "eat bread",
    "drink water",
    "move rug",
    "lift rock",
    "tie rope to hook",
    "put coin in slot",
    "examine wall",
    "open window",
    "enter hole",
    "unlock door",
    "ring bell",
    "dig sand",
    "sit on bench",
];

/// Commands reserved for bottleneck rooms; each is used at most once per game.
pub(crate) const NOVEL_COMMANDS: &[&str] = &[
    "kill troll with sword",
    "echo",
    "say xyzzy",
    "wave wand",
    "pray at altar",
    "feed lizard",
    "untangle web",
    "sing hymn",
];

const ADJECTIVES: &[&str] = &["dusty", "damp", "narrow", "bright", "cold", "quiet", "vast", "smoky"];
const PLACES: &[&str] = &[
    "cellar", "hall", "cave", "corridor", "attic", "gallery", "kitchen", "chamber",
];
const TREASURES: &[&str] = &[
    "coin", "gem", "crown", "scroll", "ring", "idol", "chalice", "amulet", "pearl", "key",
];
const DISTRACTORS: &[&str] = &[
    "a bird sings in the distance .",
    "you hear distant thunder .",
    "a cold draft passes by .",
    "somewhere water drips .",
];
const TEMPLATE_WORDS: &[&str] = &[
    ".",
    "location",
    "inventory",
    "nothing",
    "collapsed",
    "pit",
    "sunlit",
    "meadow",
    "outside",
];

const MAX_VOCAB: usize = 512;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Position {
    Room(usize),
    /// The pit reached from dead-end room `n`.
    Pit(usize),
    Finished,
}

#[derive(Clone, Debug)]
enum Effect {
    Advance,
    Stay,
    Fall,
}

#[derive(Clone, Debug)]
struct Exit {
    action: ActionCandidate,
    effect: Effect,
}

#[derive(Clone, Debug)]
struct Room {
    description: String,
    exits: Vec<Exit>,
}

/// A generated game together with its runtime state.
#[derive(Clone, Debug)]
pub struct TextGame {
    spec: GameSpec,
    vocab: Vocabulary,
    rooms: Vec<Room>,
    pits: Vec<Option<Room>>,
    position: Position,
    score: f64,
    rng: ChaCha8Rng,
}

fn candidate(vocab: &Vocabulary, id: usize, text: &str) -> Result<ActionCandidate> {
    Ok(ActionCandidate {
        id,
        tokens: vocab.tokenize(text)?,
        text: Arc::from(text),
    })
}

fn build_vocab(spec: &GameSpec) -> Result<Vocabulary> {
    let mut words: Vec<String> = Vec::new();
    let lists = [
        COMMON_COMMANDS,
        NOVEL_COMMANDS,
        ADJECTIVES,
        PLACES,
        TREASURES,
        DISTRACTORS,
        TEMPLATE_WORDS,
    ];
    for list in lists {
        for phrase in list {
            words.extend(phrase.split_whitespace().map(str::to_string));
        }
    }
    words.extend((0..spec.depth).map(|i| format!("room_{i}")));
    words.extend(spec.deadend_positions.iter().map(|i| format!("pit_{i}")));
    let vocab = Vocabulary::new(words.iter().map(String::as_str))?;
    if vocab.len() > MAX_VOCAB {
        return Err(Error::InvalidSpec(format!(
            "vocabulary of {} words exceeds {MAX_VOCAB}",
            vocab.len()
        )));
    }
    Ok(vocab)
}

/// Builds the game described by `spec`. Identical specs give identical games.
pub fn generate_game(spec: &GameSpec) -> Result<TextGame> {
    spec.validate()?;
    let vocab = build_vocab(spec)?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);

    let mut novel = NOVEL_COMMANDS.to_vec();
    novel.shuffle(&mut rng);
    let mut novel = novel.into_iter();

    let mut rooms = Vec::with_capacity(spec.depth);
    let mut pits = vec![None; spec.depth];
    for (i, pit) in pits.iter_mut().enumerate() {
        let description = format!(
            "{} {} .",
            ADJECTIVES.choose(&mut rng).unwrap(),
            PLACES.choose(&mut rng).unwrap()
        );
        let bottleneck = spec.bottleneck_positions.contains(&i);
        let n_common = if bottleneck { spec.branching - 1 } else { spec.branching };
        let mut texts: Vec<&str> = COMMON_COMMANDS.choose_multiple(&mut rng, n_common).copied().collect();
        let advance = if bottleneck {
            let k = rng.gen_range(0..=texts.len());
            texts.insert(k, novel.next().expect("validated bottleneck count"));
            k
        } else {
            rng.gen_range(0..texts.len())
        };
        let mut effects: Vec<Effect> = (0..texts.len()).map(|_| Effect::Stay).collect();
        effects[advance] = Effect::Advance;
        if spec.deadend_positions.contains(&i) {
            let mut others: Vec<usize> = (0..texts.len()).filter(|&k| k != advance).collect();
            others.shuffle(&mut rng);
            for &k in others.iter().take(spec.deadend_exits) {
                effects[k] = Effect::Fall;
            }
            let pit_texts: Vec<&str> = COMMON_COMMANDS
                .choose_multiple(&mut rng, spec.branching)
                .copied()
                .collect();
            *pit = Some(Room {
                description: "collapsed pit .".into(),
                exits: pit_texts
                    .iter()
                    .enumerate()
                    .map(|(k, t)| {
                        Ok(Exit {
                            action: candidate(&vocab, k, t)?,
                            effect: Effect::Stay,
                        })
                    })
                    .collect::<Result<_>>()?,
            });
        }
        let exits = texts
            .iter()
            .zip(effects)
            .enumerate()
            .map(|(k, (t, effect))| {
                Ok(Exit {
                    action: candidate(&vocab, k, t)?,
                    effect,
                })
            })
            .collect::<Result<_>>()?;
        rooms.push(Room { description, exits });
    }

    // Runtime randomness gets its own stream so that layout and dynamics are independent.
    let runtime = ChaCha8Rng::seed_from_u64(spec.seed ^ 0x5851_f42d_4c95_7f2d);
    Ok(TextGame {
        spec: spec.clone(),
        vocab,
        rooms,
        pits,
        position: Position::Room(0),
        score: 0.0,
        rng: runtime,
    })
}

impl TextGame {
    pub fn spec(&self) -> &GameSpec {
        &self.spec
    }

    /// Restarts the slip and distractor stream from `seed`, leaving the layout alone.
    pub fn reseed_dynamics(&mut self, seed: u64) {
        self.rng = ChaCha8Rng::seed_from_u64(seed);
    }

    pub fn position(&self) -> Position {
        self.position
    }

    pub fn score(&self) -> f64 {
        self.score
    }

    fn room(&self, pos: Position) -> Option<&Room> {
        match pos {
            Position::Room(i) => self.rooms.get(i),
            Position::Pit(i) => self.pits.get(i).and_then(Option::as_ref),
            Position::Finished => None,
        }
    }

    /// Commands offered at `pos`, in id order.
    pub fn actions_at(&self, pos: Position) -> Vec<ActionCandidate> {
        self.room(pos)
            .map(|r| r.exits.iter().map(|e| e.action.clone()).collect())
            .unwrap_or_default()
    }

    /// The advancing command of chain room `i`.
    pub fn advancing_action(&self, i: usize) -> Option<&ActionCandidate> {
        self.rooms.get(i).and_then(|r| {
            r.exits
                .iter()
                .find(|e| matches!(e.effect, Effect::Advance))
                .map(|e| &e.action)
        })
    }

    fn inventory(&self) -> String {
        let items: Vec<&str> = self
            .spec
            .reward_positions
            .iter()
            .filter(|(_, &r)| r != 0.0)
            .enumerate()
            .filter(|(_, (&s, _))| self.passed(s))
            .map(|(k, _)| TREASURES[k % TREASURES.len()])
            .collect();
        if items.is_empty() {
            "nothing".into()
        } else {
            items.join(" ")
        }
    }

    fn passed(&self, room: usize) -> bool {
        match self.position {
            Position::Room(i) => i > room,
            Position::Pit(i) => i > room,
            Position::Finished => true,
        }
    }

    /// Deterministic part of the current observation.
    pub fn base_text(&self) -> String {
        let (description, location) = match self.position {
            Position::Room(i) => (self.rooms[i].description.clone(), format!("room_{i}")),
            Position::Pit(i) => ("collapsed pit .".to_string(), format!("pit_{i}")),
            Position::Finished => ("sunlit meadow .".to_string(), "outside".to_string()),
        };
        format!("{description} location {location} . inventory {} .", self.inventory())
    }

    fn observe(&mut self) -> Result<Observation> {
        let mut text = self.base_text();
        if self.spec.stochastic && self.rng.gen_bool(self.spec.distractor_rate) {
            text.push(' ');
            text.push_str(DISTRACTORS.choose(&mut self.rng).unwrap());
        }
        let tokens = self.vocab.tokenize(&text)?;
        Ok(Observation { tokens, raw_text: text })
    }

    fn result(&mut self, reward: f64) -> Result<StepResult> {
        Ok(StepResult {
            observation: self.observe()?,
            reward,
            done: self.position == Position::Finished,
            valid_actions: self.actions_at(self.position),
        })
    }

    /// Commands that reach the maximum score from the initial state.
    /// Only meaningful for deterministic games.
    pub fn walkthrough(&self) -> Vec<ActionCandidate> {
        (0..self.spec.walkthrough_len())
            .map(|i| self.advancing_action(i).expect("chain room").clone())
            .collect()
    }

    /// Every distinct command token sequence in the game.
    pub fn all_commands(&self) -> Vec<Seq> {
        let mut out: Vec<Seq> = Vec::new();
        for room in self.rooms.iter().chain(self.pits.iter().flatten()) {
            for e in &room.exits {
                if !out.contains(&e.action.tokens) {
                    out.push(e.action.tokens.clone());
                }
            }
        }
        out
    }
}

impl Environment for TextGame {
    fn reset(&mut self) -> Result<StepResult> {
        self.position = Position::Room(0);
        self.score = 0.0;
        self.result(0.0)
    }

    fn step(&mut self, action: &ActionCandidate) -> Result<StepResult> {
        let room = self.room(self.position).ok_or(Error::EpisodeOver)?;
        let exit = room
            .exits
            .get(action.id)
            .filter(|e| e.action.tokens == action.tokens)
            .ok_or_else(|| Error::InvalidAction(action.text.to_string()))?;
        let effect = exit.effect.clone();
        if self.spec.stochastic && self.rng.gen_bool(self.spec.p_slip) {
            return self.result(0.0);
        }
        let mut reward = 0.0;
        match (effect, self.position) {
            (Effect::Advance, Position::Room(i)) => {
                reward = self.spec.reward_positions.get(&i).copied().unwrap_or(0.0);
                self.position = if i + 1 == self.spec.depth {
                    Position::Finished
                } else {
                    Position::Room(i + 1)
                };
            }
            (Effect::Fall, Position::Room(i)) => self.position = Position::Pit(i),
            _ => {}
        }
        self.score += reward;
        self.result(reward)
    }

    fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }

    fn max_score(&self) -> f64 {
        self.spec.max_score()
    }
}
