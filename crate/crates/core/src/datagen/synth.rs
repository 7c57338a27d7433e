//! Deterministic synthetic knowledge base with hub entities and numeric facts.

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kb::{KnowledgeBase, RelationMeta, UnitTable};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub seed: u64,
    pub n_entities: usize,
    /// Cap on the number of numerical relation types.
    pub n_relations: usize,
    /// Probability that a member carries a value for each of its numerical relations.
    pub numeric_fraction: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            n_entities: 400,
            n_relations: 10,
            numeric_fraction: 0.8,
        }
    }
}

#[derive(Clone, Copy)]
enum Gen {
    /// Log-uniform integer in `[lo, hi)`, written with thousands separators.
    Count {
        lo: f64,
        hi: f64,
    },
    /// Area in square miles, sometimes written in square kilometres.
    Area {
        lo: f64,
        hi: f64,
    },
    /// Area in square kilometres.
    AreaKm {
        lo: f64,
        hi: f64,
    },
    /// Price in dollars, sometimes written in thousands.
    Price {
        lo: f64,
        hi: f64,
    },
    Date {
        lo: i32,
        hi: i32,
    },
}

struct NumSpec {
    name: &'static str,
    unit: &'static str,
    time: bool,
    gen: Gen,
}

struct Attr {
    relation: &'static str,
    prefix: &'static str,
    count: usize,
}

struct Domain {
    hub: &'static str,
    member: &'static str,
    hub_relation: &'static str,
    /// Member-to-member link across hubs.
    link: &'static str,
    numeric: &'static [NumSpec],
    hub_numeric: Option<NumSpec>,
    hub_attr: Attr,
    member_attr: Attr,
    /// Hub relation pointing at one of its own members.
    capital: Option<&'static str>,
}

const fn size(name: &'static str, unit: &'static str, gen: Gen) -> NumSpec {
    NumSpec {
        name,
        unit,
        time: false,
        gen,
    }
}

const fn date(name: &'static str, lo: i32, hi: i32) -> NumSpec {
    NumSpec {
        name,
        unit: "",
        time: true,
        gen: Gen::Date { lo, hi },
    }
}

const DOMAINS: [Domain; 4] = [
    Domain {
        hub: "country",
        member: "city",
        hub_relation: "location.country.city",
        link: "location.city.twin_city",
        numeric: &[
            size("location.city.area", "mi2", Gen::Area { lo: 20.0, hi: 9000.0 }),
            date("location.city.founded", 1100, 1990),
            size("location.city.population", "", Gen::Count { lo: 5e3, hi: 2.5e7 }),
        ],
        hub_numeric: Some(size("location.country.area", "km2", Gen::AreaKm { lo: 1e3, hi: 1e7 })),
        hub_attr: Attr {
            relation: "location.country.continent",
            prefix: "continent",
            count: 5,
        },
        member_attr: Attr {
            relation: "location.city.climate",
            prefix: "climate",
            count: 4,
        },
        capital: Some("location.country.capital"),
    },
    Domain {
        hub: "artist",
        member: "album",
        hub_relation: "music.artist.album",
        link: "music.album.related_album",
        numeric: &[
            date("music.album.release_date", 1960, 2024),
            size("music.album.sales", "", Gen::Count { lo: 1e3, hi: 5e7 }),
        ],
        hub_numeric: None,
        hub_attr: Attr {
            relation: "music.artist.label",
            prefix: "label",
            count: 4,
        },
        member_attr: Attr {
            relation: "music.album.genre",
            prefix: "genre",
            count: 6,
        },
        capital: None,
    },
    Domain {
        hub: "network",
        member: "program",
        hub_relation: "tv.network.program",
        link: "tv.program.spin_off",
        numeric: &[
            size("tv.program.num_of_episodes", "", Gen::Count { lo: 4.0, hi: 900.0 }),
            date("tv.program.first_air_date", 1950, 2024),
        ],
        hub_numeric: None,
        hub_attr: Attr {
            relation: "tv.network.language",
            prefix: "language",
            count: 4,
        },
        member_attr: Attr {
            relation: "tv.program.category",
            prefix: "category",
            count: 5,
        },
        capital: None,
    },
    Domain {
        hub: "company",
        member: "product",
        hub_relation: "business.company.product",
        link: "business.product.competitor",
        numeric: &[
            date("business.product.launch_date", 1985, 2025),
            size("business.product.price", "usd", Gen::Price { lo: 5.0, hi: 5000.0 }),
        ],
        hub_numeric: None,
        hub_attr: Attr {
            relation: "business.company.industry",
            prefix: "industry",
            count: 4,
        },
        member_attr: Attr {
            relation: "business.product.line",
            prefix: "line",
            count: 5,
        },
        capital: None,
    },
];

const TIE_PROBABILITY: f64 = 0.05;
const LINK_PROBABILITY: f64 = 0.5;
const FAN_OUT: (usize, usize) = (3, 6);

fn with_commas(n: u64) -> String {
    let s = n.to_string();
    let mut out = String::new();
    for (i, c) in s.chars().enumerate() {
        if i > 0 && (s.len() - i).is_multiple_of(3) {
            out.push(',');
        }
        out.push(c);
    }
    out
}

fn log_uniform(rng: &mut impl Rng, lo: f64, hi: f64) -> f64 {
    (rng.random_range(lo.ln()..hi.ln())).exp()
}

fn raw_value(gen: Gen, rng: &mut impl Rng) -> String {
    match gen {
        Gen::Count { lo, hi } => with_commas(log_uniform(rng, lo, hi) as u64),
        Gen::Area { lo, hi } => {
            let mi2 = log_uniform(rng, lo, hi);
            if rng.random_bool(0.25) {
                format!("{} km2", with_commas((mi2 * 2.589988110336).round() as u64))
            } else {
                format!("{} mi2", with_commas(mi2.round() as u64))
            }
        }
        Gen::AreaKm { lo, hi } => format!("{} km2", with_commas(log_uniform(rng, lo, hi) as u64)),
        Gen::Price { lo, hi } => {
            let usd = log_uniform(rng, lo, hi);
            if usd >= 1000.0 && rng.random_bool(0.3) {
                format!("{:.1} kusd", usd / 1000.0)
            } else {
                format!("{} usd", with_commas(usd as u64))
            }
        }
        Gen::Date { lo, hi } => {
            let y = rng.random_range(lo..hi);
            let (m, d) = (rng.random_range(1..=12), rng.random_range(1..=28));
            match rng.random_range(0..10) {
                0 => format!("{y}"),
                1 | 2 => format!("{y}-{m:02}-{d:02}"),
                _ => format!("{y}.{m:02}.{d:02}"),
            }
        }
    }
}

fn meta(spec: &NumSpec) -> RelationMeta {
    if spec.time {
        RelationMeta::time(spec.name)
    } else {
        RelationMeta::size(spec.name, spec.unit)
    }
}

/// Active domains with their numerical relations after the `n_relations` cap.
fn plan(n_relations: usize) -> Vec<(&'static Domain, Vec<&'static NumSpec>, Option<&'static NumSpec>)> {
    let mut left = n_relations;
    let mut out = Vec::new();
    for d in &DOMAINS {
        if left == 0 {
            break;
        }
        let take = d.numeric.len().min(left);
        left -= take;
        let numeric: Vec<&NumSpec> = d.numeric[..take].iter().collect();
        let hub_numeric = match &d.hub_numeric {
            Some(h) if left > 0 => {
                left -= 1;
                Some(h)
            }
            _ => None,
        };
        out.push((d, numeric, hub_numeric));
    }
    out
}

/// Builds the knowledge base; identical configs give identical triples in identical order.
pub fn gen_synthetic_kb(config: &SynthConfig) -> Result<KnowledgeBase> {
    let SynthConfig {
        seed,
        n_entities,
        n_relations,
        numeric_fraction,
    } = *config;
    if !(numeric_fraction > 0.0 && numeric_fraction < 1.0) {
        return Err(Error::config(format!(
            "numeric_fraction {numeric_fraction} outside (0, 1)"
        )));
    }
    if n_relations == 0 {
        return Err(Error::config("need at least one numerical relation"));
    }
    let domains = plan(n_relations);
    let per_domain = n_entities / domains.len();
    let min_needed = domains
        .iter()
        .map(|(d, _, _)| 3 + d.hub_attr.count.min(1) + d.member_attr.count.min(1))
        .max()
        .unwrap_or(3);
    if per_domain < min_needed {
        return Err(Error::config(format!(
            "{n_entities} entities cannot hold a hub with two candidates in each of {} domains",
            domains.len()
        )));
    }

    let mut relations = Vec::new();
    for (d, numeric, hub_numeric) in &domains {
        relations.push(RelationMeta::non_numerical(d.hub_relation));
        relations.push(RelationMeta::non_numerical(d.link));
        relations.push(RelationMeta::non_numerical(d.hub_attr.relation));
        relations.push(RelationMeta::non_numerical(d.member_attr.relation));
        if let Some(c) = d.capital {
            relations.push(RelationMeta::non_numerical(c));
        }
        relations.extend(numeric.iter().map(|s| meta(s)));
        relations.extend(hub_numeric.iter().map(|s| meta(s)));
    }
    let mut kb = KnowledgeBase::new(relations, UnitTable::default())?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    for (d, numeric, hub_numeric) in &domains {
        let attrs = d.hub_attr.count + d.member_attr.count;
        let mut budget = per_domain.saturating_sub(attrs).max(3);
        let mut hubs: Vec<(String, Vec<String>)> = Vec::new();
        let mut member_count = 0;
        while budget >= 3 && (hubs.is_empty() || budget > FAN_OUT.0) {
            let fan = rng.random_range(FAN_OUT.0..=FAN_OUT.1).min(budget - 1);
            let members: Vec<String> = (0..fan).map(|j| format!("{}_{}", d.member, member_count + j)).collect();
            member_count += fan;
            budget -= 1 + fan;
            hubs.push((format!("{}_{}", d.hub, hubs.len()), members));
        }
        for (hub, members) in &hubs {
            let attr = format!("{}_{}", d.hub_attr.prefix, rng.random_range(0..d.hub_attr.count));
            kb.add_triple(hub, d.hub_attr.relation, &attr)?;
            if let Some(h) = hub_numeric {
                kb.add_triple(hub, h.name, &raw_value(h.gen, &mut rng))?;
            }
            for m in members {
                kb.add_triple(hub, d.hub_relation, m)?;
            }
            if let Some(c) = d.capital {
                kb.add_triple(hub, c, members.choose(&mut rng).expect("hub has members"))?;
            }
            for m in members {
                let attr = format!("{}_{}", d.member_attr.prefix, rng.random_range(0..d.member_attr.count));
                kb.add_triple(m, d.member_attr.relation, &attr)?;
            }
            fill_values(&mut kb, members, numeric, numeric_fraction, &mut rng)?;
        }
        if hubs.len() > 1 {
            for (h, (_, members)) in hubs.iter().enumerate() {
                for m in members {
                    if rng.random_bool(LINK_PROBABILITY) {
                        let other = loop {
                            let o = rng.random_range(0..hubs.len());
                            if o != h {
                                break o;
                            }
                        };
                        let target = hubs[other].1.choose(&mut rng).expect("hub has members");
                        kb.add_triple(m, d.link, target)?;
                    }
                }
            }
        }
    }
    Ok(kb)
}

/// Numeric facts for one hub's members; guarantees one relation with two values.
fn fill_values(
    kb: &mut KnowledgeBase,
    members: &[String],
    numeric: &[&NumSpec],
    fraction: f64,
    rng: &mut impl Rng,
) -> Result<()> {
    let mut grid: Vec<Vec<Option<String>>> = numeric
        .iter()
        .map(|spec| {
            let mut col: Vec<Option<String>> = Vec::with_capacity(members.len());
            for _ in members {
                let v = if rng.random_bool(fraction) {
                    let earlier: Vec<&String> = col.iter().flatten().collect();
                    if !earlier.is_empty() && rng.random_bool(TIE_PROBABILITY) {
                        Some((*earlier.choose(rng).expect("non-empty")).clone())
                    } else {
                        Some(raw_value(spec.gen, rng))
                    }
                } else {
                    None
                };
                col.push(v);
            }
            col
        })
        .collect();
    if !grid.iter().any(|col| col.iter().flatten().count() >= 2) {
        for cell in grid[0].iter_mut().filter(|c| c.is_none()) {
            *cell = Some(raw_value(numeric[0].gen, rng));
        }
    }
    for (j, m) in members.iter().enumerate() {
        for (spec, col) in numeric.iter().zip(&grid) {
            if let Some(v) = &col[j] {
                kb.add_triple(m, spec.name, v)?;
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kb::{load_kb, RelationKind};

    #[test]
    fn commas() {
        assert_eq!(with_commas(6490), "6,490");
        assert_eq!(with_commas(100), "100");
        assert_eq!(with_commas(1234567), "1,234,567");
    }

    #[test]
    fn deterministic_and_loadable() {
        let cfg = SynthConfig {
            n_entities: 200,
            ..SynthConfig::default()
        };
        let dir = tempfile::tempdir().unwrap();
        let write = |tag: &str| {
            let kb = gen_synthetic_kb(&cfg).unwrap();
            let t = dir.path().join(format!("{tag}.tsv"));
            let m = dir.path().join(format!("{tag}.jsonl"));
            kb.write_triples(&t).unwrap();
            kb.write_relation_meta(&m).unwrap();
            (std::fs::read(&t).unwrap(), std::fs::read(&m).unwrap(), t, m, kb)
        };
        let a = write("a");
        let b = write("b");
        assert_eq!(a.0, b.0);
        assert_eq!(a.1, b.1);
        let back = load_kb(&a.2, &a.3).unwrap();
        assert_eq!(back.triples(), a.4.triples());
        assert!(
            a.4.num_entities() <= 200 && a.4.num_entities() >= 150,
            "{}",
            a.4.num_entities()
        );
        let kinds: Vec<RelationKind> = back.relations().map(|(_, m)| m.kind).collect();
        assert!(kinds.contains(&RelationKind::Size) && kinds.contains(&RelationKind::Time));
        let other = gen_synthetic_kb(&SynthConfig { seed: 1, ..cfg }).unwrap();
        assert_ne!(other.triples(), a.4.triples());
    }

    #[test]
    fn relation_cap_and_errors() {
        let kb = gen_synthetic_kb(&SynthConfig {
            n_relations: 2,
            ..SynthConfig::default()
        })
        .unwrap();
        assert_eq!(kb.relations().filter(|(_, m)| m.is_numerical).count(), 2);
        assert!(gen_synthetic_kb(&SynthConfig {
            n_entities: 4,
            ..SynthConfig::default()
        })
        .is_err());
        assert!(gen_synthetic_kb(&SynthConfig {
            numeric_fraction: 0.0,
            ..SynthConfig::default()
        })
        .is_err());
    }
}
