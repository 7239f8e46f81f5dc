//! The "first harry potter novel" knowledge-graph excerpt with a canned
//! extraction and generation, used by examples and tests.
//!
//! The listed edges reference several entities whose labels are not part of
//! the excerpt; they are filled in with Freebase-style machine ids.

use std::path::Path;

use crate::gateway::{extraction_prompt, FixtureStore, Result};
use crate::graph::TextualGraph;

pub const QUESTION: &str = "what is the name of the first harry potter novel?";
pub const ANSWER: &str = "harry potter and the philosopher's stone";

pub const NODES: &str = "node_id,node_attr
0,harry potter and the chamber of secrets
1,harry potter and the philosopher's stone
3,j. k. rowling
7,harry potter and the half-blood prince
9,harry potter and the prisoner of azkaban
11,harry potter and the goblet of fire
16,harry potter
24,harry potter and the deathly hallows
46,m.046
57,fiction
59,harry potter literary series
76,professor severus snape
91,m.091
98,fantasy
190,m.0190
199,m.0199
224,m.0224
325,m.0325
371,m.0371
455,m.0455
478,m.0478
670,m.0670
806,m.0806
";

pub const EDGES: &str = "src,edge_attr,dst
16,freebase.equivalent_topic.equivalent_domain,91
91,freebase.domain_profile.featured_views,806
199,book.written_work.subjects,455
59,book.book_subject.works,199
3,book.author.works_written,670
24,media_common.adapted_work.adaptations,46
59,book.book_subject.works,371
0,book.book.characters,325
24,book.book.genre,57
24,book.book_edition.book,24
9,book.book.genre,98
190,book.book_edition.book,24
1,book.book.genre,224
24,book.book_edition.book,24
7,book.book.genre,98
59,book.literary_series.fictional_universe,16
478,book.book_edition.book,24
";

/// What an instruction-tuned model returns for the extraction prompt.
pub const EXTRACTION_REPLY: &str = "RationaleChain:
1. The question asks for the name of the first harry potter novel, and the graph includes a specific book node labeled harry potter and the philosopher's stone.
2. The graph links j. k. rowling to her books through book.author.works_written, and harry potter and the philosopher's stone is the first of them.
3. Therefore, using the graph evidence, the first Harry Potter novel is harry potter and the philosopher's stone, matching the given answer.

Anchors:
- entity: harry potter and the philosopher's stone
- entity: j. k. rowling
- relation: book.author.works_written
";

pub const GENERATION_REPLY: &str = "harry potter and the philosopher's stone";

pub fn graph() -> TextualGraph {
    TextualGraph::load(NODES, EDGES).expect("bundled case study graph is valid")
}

/// Records the extraction reply for this question into `dir`.
pub fn record_extraction(dir: &Path) -> Result<()> {
    let prompt = extraction_prompt(QUESTION, &[ANSWER.to_string()], &graph())?;
    FixtureStore::new(dir).record(&prompt, EXTRACTION_REPLY)
}
