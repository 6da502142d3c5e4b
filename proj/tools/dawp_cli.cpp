#include <cstdio>

int main() {
  std::puts("dawp: placeholder");
  return 0;
}
