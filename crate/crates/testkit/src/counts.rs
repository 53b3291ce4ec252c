//! Closed-form net sizes for a protocol, from the translation rules.
//!
//! With w(b) = 2 for an asynchronous branch and 1 for a synchronous one:
//!
//! | step | transitions | buffers | control places |
//! |------|-------------|---------|----------------|
//! | PM   | w           | async   | 0              |
//! | XOR  | Σw          | #async  | 0              |
//! | AND  | 2 + Σw      | #async  | 2m             |
//! | OR   | 2(2^m − 1) + 2^(m−1)·Σw | 2^(m−1)·#async | m·2^m |
//!
//! Role places: each role has one place per local action plus its end place.
//! OR receivers add one intermediate place per extra branch they get in an
//! alternative.

use iproto_core::protocol::{InteractionProtocol, Operator};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct NetCounts {
    pub transitions: usize,
    pub places: usize,
    pub role_places: usize,
    pub buffers: usize,
    pub control: usize,
}

pub fn expected_counts(ip: &InteractionProtocol) -> NetCounts {
    let mut c = NetCounts::default();
    for role in &ip.roles {
        let mut actions = 0;
        for step in &ip.messages {
            let bs = step.branches();
            if bs[0].sender == role.name {
                actions += 1;
            }
            let mine = bs.iter().filter(|b| b.receiver == role.name).count();
            actions += match step.operator() {
                None | Some(Operator::And) => mine,
                Some(_) => usize::from(mine > 0),
            };
        }
        c.role_places += actions + 1;
    }
    for step in &ip.messages {
        let bs = step.branches();
        let w: usize = bs.iter().map(|b| if b.is_sync() { 1 } else { 2 }).sum();
        let asyncs = bs.iter().filter(|b| !b.is_sync()).count();
        let m = bs.len();
        match step.operator() {
            None | Some(Operator::Xor) => {
                c.transitions += w;
                c.buffers += asyncs;
            }
            Some(Operator::And) => {
                c.transitions += 2 + w;
                c.buffers += asyncs;
                c.control += 2 * m;
            }
            Some(Operator::Or) => {
                let half = 1usize << (m - 1);
                c.transitions += 2 * ((1 << m) - 1) + half * w;
                c.buffers += half * asyncs;
                c.control += m << m;
                for subset in 1u32..(1 << m) {
                    let mut per_receiver = std::collections::BTreeMap::new();
                    for (i, b) in bs.iter().enumerate() {
                        if subset & (1 << i) != 0 {
                            *per_receiver.entry(b.receiver.as_str()).or_insert(0usize) += 1;
                        }
                    }
                    c.role_places += per_receiver.values().map(|k| k - 1).sum::<usize>();
                }
            }
        }
    }
    c.places = c.role_places + c.buffers + c.control;
    c
}
