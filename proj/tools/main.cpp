#include <cstdio>
int main() { std::puts("speculeak"); return 0; }
