fn main() {
    // CLI wiring lands in cli.rs; placeholder so the binary target builds.
}
