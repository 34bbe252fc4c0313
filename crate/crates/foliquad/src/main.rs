fn main() {
    foliquad::cli::run()
}
