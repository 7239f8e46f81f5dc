//! A 20-question synthetic corpus and a scripted chat responder for it.
//!
//! Every question has its own knowledge graph: a random tree of invented
//! entities (node degree at most three) holding one topic entity and the
//! answer edge(s). Sizes are long-tailed, a handful of tiny graphs and many
//! large ones. [`ScriptedLlm`] answers the extraction, generation and judge
//! prompts by reading the graph in the prompt, so fixtures for the corpus can
//! be recorded without a model.

use std::collections::BTreeSet;
use std::path::Path;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::evalkit::QAExample;
use crate::graph::{Edge, NodeId, TextualGraph};
use crate::transport::{HttpReply, Transport, TransportError};

pub const QUESTIONS: usize = 20;

struct Template {
    prefix: &'static str,
    suffix: &'static str,
    relation: &'static str,
    topic: Kind,
    answer: Kind,
    answers: usize,
}

#[derive(Clone, Copy)]
enum Kind {
    Book,
    Person,
    City,
    Genre,
    Team,
    Country,
    Language,
}

const TEMPLATES: [Template; 5] = [
    Template { prefix: "who wrote ", suffix: "?", relation: "book.written_work.author", topic: Kind::Book, answer: Kind::Person, answers: 1 },
    Template { prefix: "where was ", suffix: " born?", relation: "people.person.place_of_birth", topic: Kind::Person, answer: Kind::City, answers: 1 },
    Template { prefix: "what genre is ", suffix: "?", relation: "book.book.genre", topic: Kind::Book, answer: Kind::Genre, answers: 1 },
    Template { prefix: "which team does ", suffix: " play for?", relation: "sports.pro_athlete.team", topic: Kind::Person, answer: Kind::Team, answers: 1 },
    Template { prefix: "what languages are spoken in ", suffix: "?", relation: "location.country.languages_spoken", topic: Kind::Country, answer: Kind::Language, answers: 2 },
];

const FILLER_RELATIONS: [&str; 10] = [
    "people.person.sibling",
    "people.person.nationality",
    "location.location.contains",
    "book.book.characters",
    "film.film.based_on",
    "common.topic.notable_for",
    "organization.organization.founders",
    "sports.team.location",
    "music.artist.genre",
    "award.award_winner.awards_won",
];

const SYLLABLES: [&str; 24] = [
    "ka", "lo", "mir", "en", "dra", "vel", "tor", "is", "an", "wen", "bri", "sol", "ra", "thi", "gor",
    "ul", "ne", "sa", "fen", "oth", "qua", "zi", "mar", "hol",
];

const GENRES: [&str; 8] = [
    "tidepunk", "lantern noir", "orchard gothic", "glass fable", "salt romance", "ember saga", "quiet epic",
    "river mystery",
];

fn word(rng: &mut ChaCha8Rng) -> String {
    let n = rng.random_range(2..=3);
    (0..n).map(|_| *SYLLABLES.choose(rng).expect("non-empty")).collect()
}

fn entity(kind: Kind, rng: &mut ChaCha8Rng) -> String {
    match kind {
        Kind::Book => format!("the {} of {}", ["lantern", "ledger", "orchard", "tide", "mirror"].choose(rng).unwrap(), word(rng)),
        Kind::Person => format!("{} {}", word(rng), word(rng)),
        Kind::City => format!("port {}", word(rng)),
        Kind::Genre => GENRES.choose(rng).unwrap().to_string(),
        Kind::Team => format!("{} rovers", word(rng)),
        Kind::Country => format!("republic of {}", word(rng)),
        Kind::Language => format!("{}ic", word(rng)),
    }
}

const FILLER_KINDS: [Kind; 6] = [Kind::Book, Kind::Person, Kind::City, Kind::Team, Kind::Country, Kind::Language];

/// Node count of question `i`'s graph.
pub fn graph_size(i: usize) -> usize {
    if i % 4 == 0 {
        4 + i / 4
    } else {
        90 + 15 * i
    }
}

/// One question with its graph. The corpus is a pure function of `seed`.
pub fn question(i: usize, seed: u64) -> (QAExample, TextualGraph) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_mul(1_000_003).wrapping_add(i as u64));
    let t = &TEMPLATES[i % TEMPLATES.len()];
    let n = graph_size(i);
    let mut used = BTreeSet::new();
    let mut fresh = |kind: Kind, rng: &mut ChaCha8Rng| loop {
        let s = entity(kind, rng);
        if used.insert(s.clone()) {
            return s;
        }
    };
    let topic = fresh(t.topic, &mut rng);
    let answers: Vec<String> = (0..t.answers).map(|_| fresh(t.answer, &mut rng)).collect();
    let mut texts = vec![topic.clone()];
    texts.extend(answers.iter().cloned());
    while texts.len() < n {
        let kind = *FILLER_KINDS.choose(&mut rng).unwrap();
        texts.push(fresh(kind, &mut rng));
    }
    // node ids are a shuffled range so the topic is not always node 0
    let mut ids: Vec<NodeId> = (0..n as NodeId).collect();
    for k in (1..ids.len()).rev() {
        ids.swap(k, rng.random_range(0..=k));
    }
    let mut degree = vec![0usize; n];
    let mut edges = Vec::new();
    for a in 1..=t.answers {
        edges.push(Edge::new(ids[0], t.relation, ids[a]));
        degree[0] += 1;
        degree[a] += 1;
    }
    for v in (1 + t.answers)..n {
        let open: Vec<usize> = (0..v).filter(|&u| degree[u] < 3).collect();
        let u = *open.choose(&mut rng).unwrap_or(&0);
        let rel = if u != 0 && rng.random_bool(0.15) { t.relation } else { *FILLER_RELATIONS.choose(&mut rng).unwrap() };
        if rng.random_bool(0.5) {
            edges.push(Edge::new(ids[u], rel, ids[v]));
        } else {
            edges.push(Edge::new(ids[v], rel, ids[u]));
        }
        degree[u] += 1;
        degree[v] += 1;
    }
    let graph = TextualGraph::new(ids.iter().copied().zip(texts), edges).expect("endpoints exist");
    let id = format!("q{i:02}");
    let qa = QAExample {
        question: format!("{}{}{}", t.prefix, topic, t.suffix),
        gold_answers: answers,
        graph: id.clone(),
        id,
    };
    (qa, graph)
}

pub fn corpus(seed: u64) -> Vec<(QAExample, TextualGraph)> {
    (0..QUESTIONS).map(|i| question(i, seed)).collect()
}

/// Writes `questions.json` and `graphs/<id>.nodes.csv` / `.edges.csv`.
pub fn write_corpus(dir: &Path, seed: u64) -> std::io::Result<()> {
    let graphs = dir.join("graphs");
    std::fs::create_dir_all(&graphs)?;
    let items = corpus(seed);
    for (qa, g) in &items {
        std::fs::write(graphs.join(format!("{}.nodes.csv", qa.graph)), g.nodes_table())?;
        std::fs::write(graphs.join(format!("{}.edges.csv", qa.graph)), g.edges_table())?;
    }
    let questions: Vec<&QAExample> = items.iter().map(|(qa, _)| qa).collect();
    std::fs::write(
        dir.join("questions.json"),
        serde_json::to_string_pretty(&questions).expect("questions serialize") + "\n",
    )
}

fn between<'a>(text: &'a str, start: &str, end: &str) -> Option<&'a str> {
    let s = text.find(start)? + start.len();
    let e = text[s..].find(end)? + s;
    Some(&text[s..e])
}

fn template_for(question: &str) -> Option<&'static Template> {
    TEMPLATES.iter().find(|t| question.starts_with(t.prefix) && question.ends_with(t.suffix))
}

fn topic_of<'a>(question: &'a str, t: &Template) -> &'a str {
    &question[t.prefix.len()..question.len() - t.suffix.len()]
}

fn node_with_text(g: &TextualGraph, text: &str) -> Option<NodeId> {
    g.nodes().find(|(_, t)| *t == text).map(|(id, _)| id)
}

/// What the scripted reader answers for a generator prompt: the neighbors of
/// the topic entity over the question's relation, or "unknown".
pub fn scripted_answer(question: &str, g: &TextualGraph) -> String {
    let Some(t) = template_for(question) else {
        return "unknown".into();
    };
    let Some(topic) = node_with_text(g, topic_of(question, t)) else {
        return "unknown".into();
    };
    let mut found: Vec<&str> = g
        .incident(topic)
        .iter()
        .filter(|(_, e)| g.edges()[*e].text == t.relation && g.edges()[*e].src == topic)
        .filter_map(|(u, _)| g.node_text(*u))
        .collect();
    found.sort();
    if found.is_empty() {
        "unknown".into()
    } else {
        found.join("; ")
    }
}

fn scripted_extraction(question: &str, answers: &[&str], g: &TextualGraph) -> String {
    let t = template_for(question);
    let topic = t.map(|t| topic_of(question, t)).unwrap_or(question);
    let mut out = String::from("RationaleChain:\n");
    out.push_str(&format!("1. The question is about {topic}, which appears as an entity in the graph.\n"));
    match t {
        Some(t) => out.push_str(&format!("2. The graph connects {topic} through {} to the answer.\n", t.relation)),
        None => out.push_str("2. The graph holds the entity the question asks about.\n"),
    }
    out.push_str(&format!("3. Therefore the answer is {}.\n\nAnchors:\n", answers.join(" and ")));
    out.push_str(&format!("- entity: {topic}\n"));
    for a in answers {
        if node_with_text(g, a).is_some() {
            out.push_str(&format!("- entity: {a}\n"));
        }
    }
    if let Some(t) = t {
        if g.edges().iter().any(|e| e.text == t.relation) {
            out.push_str(&format!("- relation: {}\n", t.relation));
        }
    }
    out
}

/// Deterministic reply for any prompt the pipeline sends about the corpus.
pub fn scripted_reply(prompt: &str) -> String {
    if prompt.starts_with("Evaluate the relevance") {
        return "Relevant".into();
    }
    if prompt.starts_with("Evaluate the following anchor") {
        return "Faithful".into();
    }
    if let Some(graph_text) = between(prompt, "Graph DataBase: ", "\n\nNow produce the output.") {
        let question = between(prompt, "\n\nQuestion: ", "\n\nAnswer: ").unwrap_or("");
        let answers = between(prompt, "\n\nAnswer: ", "\n\nGraph DataBase: ").unwrap_or("");
        let answers: Vec<&str> = answers.split("; ").collect();
        return match TextualGraph::parse_linearized(graph_text) {
            Ok(g) => scripted_extraction(question, &answers, &g),
            Err(_) => "no graph".into(),
        };
    }
    if let Some(graph_text) = between(prompt, "Textualized Graph: ", ".\n\nPlease answer the given question.") {
        let question = between(prompt, "\nQuestion: ", "\n\nAnswer:").unwrap_or("");
        return match TextualGraph::parse_linearized(graph_text) {
            Ok(g) => scripted_answer(question, &g),
            Err(_) => "unknown".into(),
        };
    }
    "unknown".into()
}

/// In-process chat endpoint answering with [`scripted_reply`].
pub struct ScriptedLlm;

impl Transport for ScriptedLlm {
    fn post_json(&self, _url: &str, _bearer: Option<&str>, body: &serde_json::Value) -> Result<HttpReply, TransportError> {
        let prompt = body["messages"][0]["content"].as_str().unwrap_or("");
        let reply = serde_json::json!({
            "choices": [{ "message": { "role": "assistant", "content": scripted_reply(prompt) } }]
        });
        Ok(HttpReply { status: 200, body: reply.to_string() })
    }
}
