package com.example.toy.util;

public class TextUtils {

    public String capitalize(String s) {
        if (s == null || s.isEmpty()) {
            return s;
        }
        return Character.toUpperCase(s.charAt(0)) + s.substring(1);
    }

    public boolean isPalindrome(String s) {
        String t = normalize(s);
        return new StringBuilder(t).reverse().toString().equals(t);
    }

    private String normalize(String s) {
        return s.replaceAll("[^A-Za-z]", "").toLowerCase();
    }
}
