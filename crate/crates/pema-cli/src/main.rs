fn main() {
    // Filled in once the library surface is complete.
}
