package demo;

/* outer /* inner-looking */
class Nested {
  /* a // b */
  int x;
  // c /* d
  int y; /* e */ int z; /* f */
}
