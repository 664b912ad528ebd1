#include <cstdio>

int main() {
  std::printf("mmer: CLI under construction\n");
  return 0;
}
