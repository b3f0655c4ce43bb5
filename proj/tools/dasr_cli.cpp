// Placeholder main; replaced by the full command-line driver.
int main() { return 0; }
