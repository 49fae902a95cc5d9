#include "madrop/madrop.hpp"
int main() { return 0; }
