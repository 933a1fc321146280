// Placeholder CLI; filled in once the harness lands.
int main() { return 0; }
