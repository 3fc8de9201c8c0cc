package demo;

class Blocks {
  String json = """
      { "a": "// not a comment",
        "b": "/* neither */" }
      """;
  // after the block
  String escaped = """
      quote \""" inside
      """; /* closing */
}
