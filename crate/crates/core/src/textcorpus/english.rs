//! Seeded generator of simple English prose from sentence templates. Stands in
//! for a natural corpus where none is available.

use rand::seq::IndexedRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::rng::sub_rng;

struct Noun {
    one: &'static str,
    many: &'static str,
}

const fn n(one: &'static str, many: &'static str) -> Noun {
    Noun { one, many }
}

const ANIMALS: &[Noun] = &[
    n("dog", "dogs"),
    n("cat", "cats"),
    n("bird", "birds"),
    n("fish", "fish"),
    n("horse", "horses"),
    n("rabbit", "rabbits"),
    n("duck", "ducks"),
    n("cow", "cows"),
];

const PEOPLE: &[Noun] = &[
    n("boy", "boys"),
    n("girl", "girls"),
    n("man", "men"),
    n("woman", "women"),
    n("teacher", "teachers"),
    n("child", "children"),
    n("friend", "friends"),
    n("farmer", "farmers"),
];

const NAMES: &[(&str, &str)] = &[
    ("Tom", "he"),
    ("Anna", "she"),
    ("Sam", "he"),
    ("Lily", "she"),
    ("Max", "he"),
    ("Mia", "she"),
    ("Ben", "he"),
    ("Emma", "she"),
];

/// Verb as (third person singular, plural, past).
const ACTIONS: &[(&str, &str, &str)] = &[
    ("runs", "run", "ran"),
    ("sleeps", "sleep", "slept"),
    ("plays", "play", "played"),
    ("eats", "eat", "ate"),
    ("sings", "sing", "sang"),
    ("walks", "walk", "walked"),
    ("jumps", "jump", "jumped"),
    ("barks", "bark", "barked"),
    ("reads", "read", "read"),
    ("swims", "swim", "swam"),
];

const PLACES: &[&str] = &[
    "park", "garden", "house", "school", "yard", "store", "forest", "kitchen", "library", "beach",
];

/// (preposition, object) pairs that make physical sense.
const SPATIAL: &[(&str, &str)] = &[
    ("under", "table"),
    ("on", "chair"),
    ("under", "bed"),
    ("on", "floor"),
    ("in", "box"),
    ("in", "water"),
    ("on", "roof"),
    ("in", "garden"),
    ("next to", "door"),
    ("behind", "tree"),
    ("in", "tree"),
    ("on", "table"),
];

const SKY_THINGS: &[&str] = &["plane", "bird", "sun", "moon", "kite", "cloud"];

/// (cause, effect) clauses.
const CAUSES: &[(&str, &str)] = &[
    ("it was raining", "we took an umbrella"),
    ("he was hungry", "he ate a sandwich"),
    ("she was tired", "she went to bed early"),
    ("it was cold", "she wore a warm coat"),
    ("the shop was closed", "we went home"),
    ("he was thirsty", "he drank some water"),
    ("the dog was dirty", "we gave it a bath"),
    ("the room was dark", "she turned on the light"),
    ("the test was hard", "he studied all night"),
    ("the sun was hot", "they sat in the shade"),
    ("the baby was sleeping", "we spoke quietly"),
    ("the road was wet", "he drove slowly"),
];

/// (earlier event, later event).
const ORDER: &[(&str, &str)] = &[
    ("she ate breakfast", "she went to school"),
    ("he brushed his teeth", "he went to bed"),
    ("they washed their hands", "they ate lunch"),
    ("he put on his shoes", "he went outside"),
    ("the sun rises", "the birds sing"),
    ("the rain stopped", "the children played outside"),
    ("she finished her homework", "she watched a film"),
    ("we bought the food", "we cooked dinner"),
    ("the game was over", "they went home"),
    ("he opened the door", "he walked in"),
];

/// (event, feeling).
const FEELINGS: &[(&str, &str)] = &[
    ("lost the keys", "frustrated"),
    ("got a new puppy", "happy"),
    ("won the race", "proud"),
    ("heard the loud thunder", "scared"),
    ("saw the surprise party", "surprised"),
    ("waited for hours", "bored"),
    ("said goodbye to a friend", "sad"),
    ("broke the favorite toy", "angry"),
    ("opened the big gift", "excited"),
    ("sat by the quiet lake", "relaxed"),
];

const ANTONYMS: &[(&str, &str)] = &[
    ("hot", "cold"),
    ("big", "small"),
    ("full", "empty"),
    ("fast", "slow"),
    ("light", "heavy"),
    ("easy", "hard"),
    ("happy", "sad"),
    ("wide", "narrow"),
    ("deep", "shallow"),
    ("old", "new"),
];

const THINGS: &[&str] = &["box", "cup", "glass", "bag", "road", "lake", "soup", "car", "book", "river"];

const COUNTABLE: &[&str] = &["apples", "books", "cookies", "pens", "coins", "eggs", "flowers", "toys"];

const NUMBERS: &[&str] = &["zero", "one", "two", "three", "four", "five", "six", "seven", "eight", "nine", "ten"];

const GOOD: &[&str] = &[
    "Helping a friend",
    "Telling the truth",
    "Sharing your toys",
    "Saying thank you",
    "Being kind to animals",
];

const BAD: &[&str] = &[
    "Stealing",
    "Cheating to win a game",
    "Lying to your friends",
    "Hitting other children",
    "Breaking a promise",
];

fn capitalize(s: &str) -> String {
    let mut c = s.chars();
    match c.next() {
        Some(f) => f.to_uppercase().collect::<String>() + c.as_str(),
        None => String::new(),
    }
}

fn subject(rng: &mut ChaCha8Rng) -> (String, bool) {
    let plural = rng.random_bool(0.4);
    let pool = if rng.random_bool(0.5) { ANIMALS } else { PEOPLE };
    let noun = pool.choose(rng).expect("non-empty");
    (format!("the {}", if plural { noun.many } else { noun.one }), plural)
}

fn agreement(rng: &mut ChaCha8Rng) -> String {
    let (subj, plural) = subject(rng);
    let (one, many, _) = ACTIONS.choose(rng).expect("non-empty");
    let verb = if plural { many } else { one };
    let tail = match rng.random_range(0..3) {
        0 => format!(" in the {}", PLACES.choose(rng).expect("non-empty")),
        1 => " every morning".to_string(),
        _ => String::new(),
    };
    format!("{} {verb}{tail}.", capitalize(&subj))
}

fn spatial(rng: &mut ChaCha8Rng) -> String {
    if rng.random_bool(0.2) {
        let thing = SKY_THINGS.choose(rng).expect("non-empty");
        return format!("The {thing} is high in the sky.");
    }
    let (subj, plural) = subject(rng);
    let (prep, obj) = SPATIAL.choose(rng).expect("non-empty");
    let be = if plural { "are" } else { "is" };
    format!("{} {be} {prep} the {obj}.", capitalize(&subj))
}

fn cause(rng: &mut ChaCha8Rng) -> String {
    let (c, e) = CAUSES.choose(rng).expect("non-empty");
    match rng.random_range(0..3) {
        0 => format!("{}, so {e}.", capitalize(c)),
        1 => format!("{} because {c}.", capitalize(e)),
        _ => {
            let (_, other) = CAUSES.choose(rng).expect("non-empty");
            format!("{}, but {other}.", capitalize(c))
        }
    }
}

fn temporal(rng: &mut ChaCha8Rng) -> String {
    let (a, b) = ORDER.choose(rng).expect("non-empty");
    match rng.random_range(0..3) {
        0 => format!("{} before {b}.", capitalize(a)),
        1 => format!("{} after {a}.", capitalize(b)),
        _ => format!("First {a}, and then {b}."),
    }
}

fn feeling(rng: &mut ChaCha8Rng) -> String {
    let (name, pronoun) = NAMES.choose(rng).expect("non-empty");
    let (event, mood) = FEELINGS.choose(rng).expect("non-empty");
    match rng.random_range(0..2) {
        0 => format!("When {name} {event}, {pronoun} was really {mood}."),
        _ => format!("{name} felt {mood} because {pronoun} {event}."),
    }
}

fn antonym(rng: &mut ChaCha8Rng) -> String {
    let (a, b) = ANTONYMS.choose(rng).expect("non-empty");
    let (a, b) = if rng.random_bool(0.5) { (a, b) } else { (b, a) };
    let thing = THINGS.choose(rng).expect("non-empty");
    match rng.random_range(0..2) {
        0 => format!("The {thing} was not {a}. It was {b}."),
        _ => format!("The {thing} was very {a}, not {b}."),
    }
}

fn quantity(rng: &mut ChaCha8Rng) -> String {
    let item = COUNTABLE.choose(rng).expect("non-empty");
    let total = rng.random_range(2..=10usize);
    let taken = rng.random_range(1..total);
    match rng.random_range(0..3) {
        0 => format!(
            "There are {total} {item}. If I take {taken}, there will be {} left.",
            total - taken
        ),
        1 => {
            let have = rng.random_range(1..=8usize);
            let extra = rng.random_range(1..=10 - have);
            format!(
                "I had {} {item} and found {} more. Now I have {} {item}.",
                NUMBERS[have],
                NUMBERS[extra],
                NUMBERS[have + extra]
            )
        }
        _ => "A week has 7 days, and a dog has 4 legs.".to_string(),
    }
}

fn ethics(rng: &mut ChaCha8Rng) -> String {
    if rng.random_bool(0.5) {
        let act = GOOD.choose(rng).expect("non-empty");
        let word = ["good", "right", "kind"].choose(rng).expect("non-empty");
        format!("{act} is always {word}.")
    } else {
        let act = BAD.choose(rng).expect("non-empty");
        let word = ["wrong", "bad", "never acceptable"].choose(rng).expect("non-empty");
        format!("{act} is {word}.")
    }
}

fn story(rng: &mut ChaCha8Rng) -> String {
    let (name, pronoun) = NAMES.choose(rng).expect("non-empty");
    let place = PLACES.choose(rng).expect("non-empty");
    let (_, _, past) = ACTIONS.choose(rng).expect("non-empty");
    let (c, e) = CAUSES.choose(rng).expect("non-empty");
    format!(
        "One day {name} went to the {place}. There {pronoun} {past} for a long time. Then {c}, so {e}."
    )
}

/// `n_sentences` sentences of simple English, grouped into short paragraphs.
pub fn template_english(n_sentences: usize, seed: u64) -> String {
    let mut rng = sub_rng(seed, "template-english");
    let makers: [fn(&mut ChaCha8Rng) -> String; 10] =
        [agreement, spatial, cause, temporal, feeling, antonym, quantity, ethics, story, agreement];
    let mut out = String::new();
    for i in 0..n_sentences {
        let make = makers.choose(&mut rng).expect("non-empty");
        out.push_str(&make(&mut rng));
        out.push(if i % 6 == 5 { '\n' } else { ' ' });
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::textcorpus::Vocab;

    #[test]
    fn deterministic_and_small_vocabulary() {
        let a = template_english(5000, 1);
        assert_eq!(a, template_english(5000, 1));
        assert_ne!(a, template_english(5000, 2));
        let v = Vocab::build(&a, 65536).unwrap();
        assert!(v.len() < 500, "{} types", v.len());
        assert!(a.contains("before"));
    }
}
