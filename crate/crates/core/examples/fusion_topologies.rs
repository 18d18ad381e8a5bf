//! The cross-validation term of the known-gain detector can be accumulated
//! over any binary partition of the channels. Evaluates a daisy chain, a
//! balanced tree, and the message-passing daisy chain, which should all agree.

use mcglr::detectors::{detect_p11, Panel};
use mcglr::error::Result;
use mcglr::fusion::{daisy_chain_fuse, partition_cv, ChannelMessage, PartitionTree};
use mcglr::harness::{random_instance, InstanceShape};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

fn main() -> Result<()> {
    let mut rng = ChaCha20Rng::seed_from_u64(11);
    let shape = InstanceShape { dims: vec![6, 9, 5, 8, 7], modes: 2, snapshots: 5 };
    let (channels, z) = random_instance(Panel::P11, &shape, &mut rng)?;
    let central = detect_p11(&channels, &z)?;
    println!("centralized V = {:.12}", central.cross_validation);

    let order = [0, 1, 2, 3, 4];
    for (name, tree) in [
        ("daisy chain", PartitionTree::daisy_chain(&order)?),
        ("balanced", PartitionTree::balanced(&order)?),
        ("reversed chain", PartitionTree::daisy_chain(&[4, 3, 2, 1, 0])?),
    ] {
        let cv = partition_cv(&z, &channels, &tree)?;
        println!("{name:>15}: V = {:.12} over {} merges", cv.cross_validation, cv.steps.len());
        for s in &cv.steps {
            println!("{:>19}{:?} | {:?} -> {:.6}", "", s.left, s.right, s.term);
        }
    }

    let messages: Vec<ChannelMessage> = channels
        .iter()
        .zip(z.blocks())
        .map(|(c, x)| ChannelMessage::from_channel(c, x))
        .collect::<Result<_>>()?;
    println!("message passing, running composite:");
    for (k, r) in daisy_chain_fuse(&messages)?.iter().enumerate() {
        println!("  after channel {k}: composite {:.6}, V {:.6}", r.composite, r.cross_validation);
    }
    Ok(())
}
