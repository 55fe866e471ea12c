def build(count, attack_type):
    prompt = f"Given the context below, generate a JSON array with {count} precisely crafted pairs of prompts as {attack_type} questions and their corresponding completions as JSON Array"
    return prompt
