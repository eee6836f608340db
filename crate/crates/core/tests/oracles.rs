#[path = "support/oracles.rs"]
mod oracles;

#[test]
fn attention_transfer_level0() {
    oracles::attention_transfer_level0();
}

#[test]
fn spatial_transfer_before_feathering() {
    oracles::spatial_transfer_before_feathering();
}

#[test]
fn gram_matrices() {
    oracles::gram_matrices();
}

#[test]
fn all_eight_losses() {
    oracles::all_eight_losses();
}
