use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::clicksim::{seeded_rng, ImpressionEvent, ProductId, QueryId};

/// A clicked and an unclicked product from the same first page.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ClickPairRecord {
    pub query_id: QueryId,
    pub clicked: ProductId,
    pub unclicked: ProductId,
}

/// Raw click-through pairs for the pair-wise click baseline: within each
/// session every clicked product is paired with every unclicked one. At
/// most `max_pairs` are kept, sampled uniformly with a seeded generator.
pub fn build_click_pairs(events: &[ImpressionEvent], max_pairs: usize, seed: u64) -> Vec<ClickPairRecord> {
    let mut sessions: BTreeMap<u64, Vec<&ImpressionEvent>> = BTreeMap::new();
    for e in events.iter().filter(|e| e.page == 1) {
        sessions.entry(e.session).or_default().push(e);
    }
    let mut pairs = Vec::new();
    for page in sessions.values_mut() {
        page.sort_by_key(|e| e.position);
        for pos in page.iter().filter(|e| e.clicked) {
            for neg in page.iter().filter(|e| !e.clicked) {
                pairs.push(ClickPairRecord {
                    query_id: pos.query_id,
                    clicked: pos.product_id,
                    unclicked: neg.product_id,
                });
            }
        }
    }
    if pairs.len() > max_pairs {
        let mut rng = seeded_rng(seed, 20);
        let mut kept: Vec<ClickPairRecord> = pairs.choose_multiple(&mut rng, max_pairs).copied().collect();
        kept.sort();
        kept
    } else {
        pairs
    }
}
