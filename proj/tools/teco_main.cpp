#include <iostream>

#include "teco/kernels.hpp"

int main() {
  std::cout << "teco (kernels: " << teco::kern::active().name << ")\n";
  return 0;
}
