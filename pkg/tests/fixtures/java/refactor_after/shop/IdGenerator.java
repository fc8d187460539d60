package shop;

public interface IdGenerator {
    String next();
}
