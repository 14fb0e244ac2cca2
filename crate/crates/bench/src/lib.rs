//! Shared inputs for the criterion benchmarks.

use cfkit::channel::int_matrix;
use cfkit::regions::Scheme;
use cfkit::simulator::{Equalizers, TrialConfig};
use cfkit::{ChannelInstance, NestedLatticeEnsemble};

pub fn two_user_channel() -> ChannelInstance {
    ChannelInstance::from_rows(&[[1.0, 1.5]], &[7.0, 4.0]).expect("valid channel")
}

pub fn two_receiver_channels() -> [ChannelInstance; 2] {
    [
        ChannelInstance::from_rows(&[[3.3, 2.1]], &[4.0, 3.0]).expect("valid channel"),
        ChannelInstance::from_rows(&[[2.4, 4.2]], &[4.0, 3.0]).expect("valid channel"),
    ]
}

/// Two users, blocklength 6 over Z_5, successive decoding at moderate noise.
pub fn small_trial() -> TrialConfig {
    let p = 1.0 / 3.0;
    TrialConfig {
        ensemble: NestedLatticeEnsemble::build(6, 5, 2.0, &[(0, 1), (0, 2)], 1).expect("valid ensemble"),
        ch: ChannelInstance::from_rows(&[[1.0, 1.5], [0.4, -0.8]], &[p, p]).expect("valid channel"),
        a: int_matrix(&[[1, 1], [1, 2]]),
        scheme: Scheme::Successive,
        mapping: None,
        noise_std: 0.1,
        equalizers: Equalizers::Optimal,
        master_seed: 1,
    }
}
