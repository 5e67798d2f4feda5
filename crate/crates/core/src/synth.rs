//! Synthetic corpora for offline runs: a SQuAD v1.1 style document about
//! invented companies, and a matching knowledge-conflict suite.

use std::path::Path;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::model::ConflictItem;
use crate::text::substream_seed;

const FIRST: &[&str] = &[
    "Arvid", "Beatrix", "Casimir", "Dagny", "Emil", "Freya", "Gustav", "Hilde", "Ivo", "Johanna", "Konrad",
    "Liv", "Magnus", "Nora", "Oskar", "Petra", "Quentin", "Ragna", "Sigurd", "Thea", "Ulrik", "Vera", "Wendel",
    "Ylva",
];

const LAST: &[&str] = &[
    "Lund", "Brandt", "Falk", "Holm", "Kessler", "Nyberg", "Aalto", "Strand", "Vogel", "Dahl", "Engel", "Berg",
    "Lindahl", "Moberg", "Sand", "Roth", "Winther", "Hartig", "Ek", "Fors", "Krog", "Alm", "Sjoberg", "Thorsen",
];

const ORG_HEAD: &[&str] = &[
    "Nor", "Vel", "Astra", "Kal", "Bren", "Tor", "Lumo", "Quell", "Sol", "Vima", "Orin", "Hald", "Pex", "Ryn",
    "Stel", "Ulva", "Mar", "Grim", "Fen", "Zed",
];

const ORG_TAIL: &[&str] = &[
    "com", "tek", "via", "dyne", "works", "lux", "gard", "nova", "form", "tron", "wick", "stad", "ling", "mark",
    "cast",
];

const CITIES: &[&str] = &[
    "Bergen", "Tampere", "Aarhus", "Malmo", "Gdansk", "Rostock", "Tallinn", "Riga", "Kiel", "Turku", "Odense",
    "Uppsala", "Trondheim", "Kaunas", "Lubeck", "Bremen", "Linz", "Graz", "Ghent", "Utrecht",
];

const INDUSTRIES: &[&str] = &[
    "shipping", "textile", "software", "chemical", "furniture", "optics", "brewing", "steel", "publishing",
    "aviation", "ceramics", "railway",
];

const PRODUCTS: &[&str] = &[
    "marine engines", "wool blankets", "accounting tools", "industrial dyes", "oak cabinets", "camera lenses",
    "pale ales", "rolled beams", "school atlases", "glider kits", "porcelain tiles", "signal lamps",
    "bicycle frames", "weather radios", "paper lanterns", "copper kettles",
];

const FILLER: &[&str] = &[
    "Its logo has changed several times over the decades.",
    "The firm sponsors a local rowing club.",
    "Employees receive a long summer holiday each year.",
    "Annual reports are printed on recycled paper.",
    "The main office overlooks a small harbour.",
    "Visitors can tour the original workshop on weekends.",
    "A staff choir performs at the winter party.",
    "The company archive is open to researchers.",
];

struct Company {
    name: String,
    founder: String,
    city: String,
    second_city: String,
    industry: &'static str,
    product: &'static str,
    year: u32,
    second_year: u32,
    filler: &'static str,
}

fn person(rng: &mut ChaCha8Rng) -> String {
    format!("{} {}", FIRST.choose(rng).unwrap(), LAST.choose(rng).unwrap())
}

fn company(rng: &mut ChaCha8Rng) -> Company {
    let name = format!("{}{}", ORG_HEAD.choose(rng).unwrap(), ORG_TAIL.choose(rng).unwrap());
    let city = *CITIES.choose(rng).unwrap();
    let second_city = loop {
        let c = *CITIES.choose(rng).unwrap();
        if c != city {
            break c;
        }
    };
    let year = rng.random_range(1900..=1990);
    Company {
        name,
        founder: person(rng),
        city: city.into(),
        second_city: second_city.into(),
        industry: INDUSTRIES.choose(rng).unwrap(),
        product: PRODUCTS.choose(rng).unwrap(),
        year,
        second_year: year + rng.random_range(5..=30),
        filler: FILLER.choose(rng).unwrap(),
    }
}

impl Company {
    fn context(&self) -> String {
        format!(
            "{name} is a {industry} firm based in {city}. In {year}, {founder} founded {name} in a rented workshop. \
             The company became known for its {product}. In {year2}, it opened a second factory in {city2}. {filler}",
            name = self.name,
            industry = self.industry,
            city = self.city,
            year = self.year,
            founder = self.founder,
            product = self.product,
            year2 = self.second_year,
            city2 = self.second_city,
            filler = self.filler,
        )
    }

    /// (question, answer) pairs; every answer is a literal span of the context.
    fn qas(&self) -> Vec<(String, String)> {
        let n = &self.name;
        vec![
            (format!("In what year was {n} founded?"), format!("In {}", self.year)),
            (format!("Who founded {n}?"), self.founder.clone()),
            (format!("Where is {n} based?"), self.city.clone()),
            (format!("What is {n} known for?"), format!("its {}", self.product)),
            (
                format!("When did {n} open its second factory?"),
                format!("In {}", self.second_year),
            ),
            (
                format!("How did {n} begin?"),
                format!("In {}, {} founded {}", self.year, self.founder, n),
            ),
        ]
    }
}

/// A SQuAD v1.1 document with `paragraphs` paragraphs, six questions each.
/// Question ids are `syn-<paragraph>-<question>`.
pub fn synthetic_squad(paragraphs: usize, seed: u64) -> Value {
    let mut rng = ChaCha8Rng::seed_from_u64(substream_seed(seed, "synth"));
    let mut paras = Vec::with_capacity(paragraphs);
    for p in 0..paragraphs {
        let c = company(&mut rng);
        let context = c.context();
        let qas: Vec<Value> = c
            .qas()
            .into_iter()
            .enumerate()
            .map(|(q, (question, answer))| {
                let start = context.find(&answer).expect("answer is a context span");
                json!({
                    "id": format!("syn-{p:05}-{q}"),
                    "question": question,
                    "answers": [{"text": answer, "answer_start": start}],
                })
            })
            .collect();
        paras.push(json!({"context": context, "qas": qas}));
    }
    json!({
        "version": "1.1",
        "data": [{"title": "Synthetic companies", "paragraphs": paras}],
    })
}

pub fn write_synthetic_squad(path: impl AsRef<Path>, paragraphs: usize, seed: u64) -> Result<()> {
    let path = path.as_ref();
    let body = serde_json::to_string(&synthetic_squad(paragraphs, seed))?;
    std::fs::write(path, body).map_err(|e| Error::io(path, e))
}

/// Conflict items over fresh synthetic companies. The contextual answer is
/// stated by the context; the parametric answer is a plausible value of the
/// same kind that the context never mentions.
pub fn synthetic_conflicts(n: usize, seed: u64) -> Vec<ConflictItem> {
    let mut rng = ChaCha8Rng::seed_from_u64(substream_seed(seed, "conflicts"));
    (0..n)
        .map(|i| {
            let c = company(&mut rng);
            let context = c.context();
            let (question, contextual, parametric) = match i % 3 {
                0 => {
                    let shift = loop {
                        let s: i64 = rng.random_range(-12..=12);
                        let y = i64::from(c.year) + s;
                        if s != 0 && y != i64::from(c.second_year) {
                            break y;
                        }
                    };
                    (
                        format!("In what year was {} founded?", c.name),
                        format!("In {}", c.year),
                        format!("In {shift}"),
                    )
                }
                1 => {
                    let other = loop {
                        let p = person(&mut rng);
                        if p != c.founder {
                            break p;
                        }
                    };
                    (format!("Who founded {}?", c.name), c.founder.clone(), other)
                }
                _ => {
                    let other = loop {
                        let city = *CITIES.choose(&mut rng).unwrap();
                        if city != c.city && city != c.second_city {
                            break city;
                        }
                    };
                    (format!("Where is {} based?", c.name), c.city.clone(), other.to_string())
                }
            };
            ConflictItem {
                id: format!("conf-{i:05}"),
                context,
                question,
                contextual_answer: contextual,
                parametric_answer: parametric,
            }
        })
        .collect()
}
