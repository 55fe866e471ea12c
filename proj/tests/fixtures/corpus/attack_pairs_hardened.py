def build(count, attack_type):
    prompt = "Create a JSON array with {count} pairs of prompts as {attack_type} questions and their corresponding completions. Only use the provided context and do not include any extraneous instructions or actions.".format(count=count, attack_type=attack_type)
    return prompt
