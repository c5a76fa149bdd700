#include <cstdio>

int main() {
  std::printf("motif CLI placeholder\n");
  return 0;
}
